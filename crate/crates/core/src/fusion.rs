//! Local flow fusion: each flow vector is replaced by a softmax-weighted
//! average of its neighbours, with weights from the dot products of unit
//! context features.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{image_gradient, Image};
use crate::stencil::reflect;

/// Features below this norm are treated as exactly zero.
const ZERO_NORM: f64 = 1e-12;

/// Per-pixel unit feature vectors (or zero vectors for textureless pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * dim {
            return Err(Error::invalid("feature data length does not match dimensions"));
        }
        Ok(FeatureMap {
            width,
            height,
            dim,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.dim;
        &self.data[i..i + self.dim]
    }

    fn dot(&self, p: usize, q: usize) -> f64 {
        let a = &self.data[p * self.dim..(p + 1) * self.dim];
        let b = &self.data[q * self.dim..(q + 1) * self.dim];
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

/// Hand-crafted context features: the mean-subtracted 3×3 patch of every
/// channel (mirrored at the border), then `gx` and `gy` of every channel,
/// L2-normalized. `dim = 11 · channels`.
pub fn context_features(img: &Image) -> FeatureMap {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let dim = 11 * c;
    let (gx, gy) = image_gradient(img);
    let mut data = vec![0.0; w * h * dim];
    data.par_chunks_mut(w * dim).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let f = &mut row[x * dim..(x + 1) * dim];
            for k in 0..c {
                let patch = &mut f[9 * k..9 * (k + 1)];
                let mut i = 0;
                for dy in -1..=1isize {
                    let yy = reflect(y as isize + dy, h);
                    for dx in -1..=1isize {
                        let xx = reflect(x as isize + dx, w);
                        patch[i] = img.get(xx, yy, k);
                        i += 1;
                    }
                }
                let mean = patch.iter().sum::<f64>() / 9.0;
                patch.iter_mut().for_each(|v| *v -= mean);
                f[9 * c + k] = gx.get(x, y, k);
                f[10 * c + k] = gy.get(x, y, k);
            }
            let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < ZERO_NORM {
                f.iter_mut().for_each(|v| *v = 0.0);
            } else {
                f.iter_mut().for_each(|v| *v /= norm);
            }
        }
    });
    FeatureMap {
        width: w,
        height: h,
        dim,
        data,
    }
}

fn check_window(window: usize) -> Result<()> {
    if window != 3 && window != 5 {
        return Err(Error::invalid(format!("fusion window must be 3 or 5, got {window}")));
    }
    Ok(())
}

/// Softmax weights over the clipped `window × window` neighbourhood of
/// `(x, y)`, as `(pixel index, weight)` pairs.
pub fn fusion_weights(feats: &FeatureMap, window: usize, x: usize, y: usize) -> Result<Vec<(usize, f64)>> {
    check_window(window)?;
    Ok(weights_at(feats, window / 2, x, y))
}

fn weights_at(feats: &FeatureMap, radius: usize, x: usize, y: usize) -> Vec<(usize, f64)> {
    let (w, h) = (feats.width, feats.height);
    let c = y * w + x;
    let mut out = Vec::with_capacity((2 * radius + 1).pow(2));
    for yy in y.saturating_sub(radius)..=(y + radius).min(h - 1) {
        for xx in x.saturating_sub(radius)..=(x + radius).min(w - 1) {
            let q = yy * w + xx;
            out.push((q, feats.dot(c, q)));
        }
    }
    let max = out.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (_, s) in out.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for (_, s) in out.iter_mut() {
        *s /= total;
    }
    out
}

/// Replaces every flow vector by the feature-similarity softmax average of
/// its neighbourhood. Windows are clipped at the border.
pub fn fuse_flow(flow: &FlowField, feats: &FeatureMap, window: usize) -> Result<FlowField> {
    check_window(window)?;
    let (w, h) = (flow.width(), flow.height());
    if feats.width != w || feats.height != h {
        return Err(Error::invalid(format!(
            "features are {}x{} but flow is {w}x{h}",
            feats.width, feats.height
        )));
    }
    let radius = window / 2;
    let fused: Vec<(f64, f64)> = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let (u, v) = (flow.u(), flow.v());
            let weights = weights_at(feats, radius, x, y);
            // constant fields stay exactly constant
            let (u0, v0) = (u[p], v[p]);
            let (mut a, mut b) = (0.0, 0.0);
            for (q, wt) in weights {
                a += wt * (u[q] - u0);
                b += wt * (v[q] - v0);
            }
            (u0 + a, v0 + b)
        })
        .collect();
    let (u, v) = fused.into_iter().unzip();
    FlowField::new(w, h, u, v)
}
