//! Flow fields and their local differential analyses: the velocity-gradient
//! decomposition (linear distortion, shear, rotation) and the 3×3
//! least-squares deformation ratios.

use crate::error::{Error, Result};
use crate::stencil::{forward_dx, forward_dy};

/// Per-pixel displacement `(u, v)` in pixels, stored as two planes.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("flow dimensions must be positive"));
        }
        let n = width * height;
        if u.len() != n || v.len() != n {
            return Err(Error::invalid(format!(
                "flow planes have {} and {} samples, expected {n}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::invalid("flow contains non-finite values"));
        }
        Ok(FlowField {
            width,
            height,
            u,
            v,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    /// Builds a field from `f(x, y) -> (u, v)`, visiting pixels in row-major
    /// order.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        FlowField {
            width,
            height,
            u,
            v,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn set(&mut self, x: usize, y: usize, value: (f64, f64)) {
        let i = y * self.width + x;
        self.u[i] = value.0;
        self.v[i] = value.1;
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// `self + step * dir`, componentwise.
    pub fn axpy(&self, step: f64, dir: &FlowField) -> FlowField {
        debug_assert_eq!(self.len(), dir.len());
        FlowField {
            width: self.width,
            height: self.height,
            u: self.u.iter().zip(&dir.u).map(|(a, b)| a + step * b).collect(),
            v: self.v.iter().zip(&dir.v).map(|(a, b)| a + step * b).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|a| a * k).collect(),
            v: self.v.iter().map(|a| a * k).collect(),
        }
    }

    /// Largest absolute component.
    /// `Σ u² + v²`.
    pub fn norm_sq(&self) -> f64 {
        self.u.iter().chain(&self.v).map(|a| a * a).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Mean endpoint magnitude `|(u, v)|`.
    pub fn mean_magnitude(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(a, b)| a.hypot(*b))
            .sum::<f64>()
            / self.len() as f64
    }

    /// Bilinear sample of `(u, v)` at real coordinates, clamped to the grid.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1, fx) = axis(x, self.width);
        let (y0, y1, fy) = axis(y, self.height);
        let w = self.width;
        let lerp = |p: &[f64]| {
            let top = p[y0 * w + x0] + fx * (p[y0 * w + x1] - p[y0 * w + x0]);
            let bottom = p[y1 * w + x0] + fx * (p[y1 * w + x1] - p[y1 * w + x0]);
            top + fy * (bottom - top)
        };
        (lerp(&self.u), lerp(&self.v))
    }
}

fn axis(t: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let t = t.clamp(0.0, (n - 1) as f64);
    let i = (t.floor() as usize).min(n - 2);
    (i, i + 1, t - i as f64)
}

/// Resamples the flow onto a `width × height` grid (the next finer level) by
/// bilinear interpolation at `(x / 2, y / 2)` and doubles the displacements.
pub fn upsample_flow_to(flow: &FlowField, width: usize, height: usize) -> FlowField {
    FlowField::from_fn(width, height, |x, y| {
        let (u, v) = flow.sample(x as f64 / 2.0, y as f64 / 2.0);
        (2.0 * u, 2.0 * v)
    })
}

/// [`upsample_flow_to`] onto a grid of exactly twice the size.
pub fn upsample_flow(flow: &FlowField) -> FlowField {
    upsample_flow_to(flow, 2 * flow.width(), 2 * flow.height())
}

/// Per-pixel linear distortion rates, shear rate and rotation rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionField {
    pub width: usize,
    pub height: usize,
    pub eps_xx: Vec<f64>,
    pub eps_yy: Vec<f64>,
    pub eps_xy: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Velocity-gradient decomposition with forward differences:
/// `ε_xx = ∂u/∂x`, `ε_yy = ∂v/∂y`, `ε_xy = (∂u/∂y + ∂v/∂x) / 2`,
/// `ω = (∂v/∂x − ∂u/∂y) / 2`.
pub fn decompose(flow: &FlowField) -> Result<DecompositionField> {
    let (w, h) = (flow.width(), flow.height());
    if w < 2 || h < 2 {
        return Err(Error::invalid("decomposition needs a flow of at least 2x2"));
    }
    let ux = forward_dx(flow.u(), w, h);
    let uy = forward_dy(flow.u(), w, h);
    let vx = forward_dx(flow.v(), w, h);
    let vy = forward_dy(flow.v(), w, h);
    let eps_xy = uy.iter().zip(&vx).map(|(a, b)| 0.5 * (a + b)).collect();
    let omega = uy.iter().zip(&vx).map(|(a, b)| 0.5 * (b - a)).collect();
    Ok(DecompositionField {
        width: w,
        height: h,
        eps_xx: ux,
        eps_yy: vy,
        eps_xy,
        omega,
    })
}

/// Local length-change ratios along x and y and their product (area ratio).
#[derive(Debug, Clone, PartialEq)]
pub struct RatioField {
    pub width: usize,
    pub height: usize,
    pub rx: Vec<f64>,
    pub ry: Vec<f64>,
    pub r: Vec<f64>,
}

/// The 3×3 window around `(x, y)`, clipped to the grid.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RatioWindow {
    pub x_lo: usize,
    pub x_hi: usize,
    pub y_lo: usize,
    pub y_hi: usize,
    /// Σ (x − x_c) over the window.
    pub sum_dx: f64,
    pub sum_dy: f64,
    /// Σ (x − x_c)² over the window.
    pub sxx: f64,
    pub syy: f64,
}

impl RatioWindow {
    pub fn at(x: usize, y: usize, width: usize, height: usize) -> Self {
        let x_lo = x.saturating_sub(1);
        let x_hi = (x + 1).min(width - 1);
        let y_lo = y.saturating_sub(1);
        let y_hi = (y + 1).min(height - 1);
        let rows = (y_hi - y_lo + 1) as f64;
        let cols = (x_hi - x_lo + 1) as f64;
        let (mut sdx, mut sxx) = (0.0, 0.0);
        for xx in x_lo..=x_hi {
            let d = xx as f64 - x as f64;
            sdx += d;
            sxx += d * d;
        }
        let (mut sdy, mut syy) = (0.0, 0.0);
        for yy in y_lo..=y_hi {
            let d = yy as f64 - y as f64;
            sdy += d;
            syy += d * d;
        }
        RatioWindow {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
            sum_dx: sdx * rows,
            sum_dy: sdy * cols,
            sxx: sxx * rows,
            syy: syy * cols,
        }
    }
}

/// Least-squares fit of `(x' − x'_c) = R_x (x − x_c)` (and likewise in y)
/// over each clipped 3×3 window, where `x' = x + u`. `R = R_x R_y`.
pub fn deformation_ratio(flow: &FlowField) -> RatioField {
    let (w, h) = (flow.width(), flow.height());
    let n = w * h;
    let (mut rx, mut ry, mut r) = (vec![1.0; n], vec![1.0; n], vec![1.0; n]);
    let (u, v) = (flow.u(), flow.v());
    for y in 0..h {
        for x in 0..w {
            let win = RatioWindow::at(x, y, w, h);
            let c = y * w + x;
            let (mut su, mut sv) = (0.0, 0.0);
            for yy in win.y_lo..=win.y_hi {
                let dy = yy as f64 - y as f64;
                for xx in win.x_lo..=win.x_hi {
                    let dx = xx as f64 - x as f64;
                    let q = yy * w + xx;
                    su += dx * u[q];
                    sv += dy * v[q];
                }
            }
            let fx = if win.sxx > 0.0 {
                1.0 + (su - u[c] * win.sum_dx) / win.sxx
            } else {
                1.0
            };
            let fy = if win.syy > 0.0 {
                1.0 + (sv - v[c] * win.sum_dy) / win.syy
            } else {
                1.0
            };
            rx[c] = fx;
            ry[c] = fy;
            r[c] = fx * fy;
        }
    }
    RatioField {
        width: w,
        height: h,
        rx,
        ry,
        r,
    }
}
