//! Floating-point rasters, bilinear sampling and backward warping.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowField;

/// A row-major, channel-interleaved grid of reals with no range constraint.
///
/// Used for derived quantities such as gradients, weight maps and SSIM maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid("raster dimensions must be positive"));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "raster data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub(crate) fn from_parts(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Raster {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// An image with `channels` ∈ {1, 3}, at least 2×2, samples finite in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    raster: Raster,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::invalid(format!(
                "image must be at least 2x2, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        let raster = Raster::new(width, height, channels, data)?;
        if let Some(bad) = raster
            .data
            .iter()
            .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::invalid(format!(
                "sample {bad} is {} (expected a finite value in [0, 1])",
                raster.data[bad]
            )));
        }
        Ok(Image { raster })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Image::new(width, height, channels, data)
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Wraps data already known to satisfy the invariants (convex
    /// combinations of valid samples).
    pub(crate) fn from_raster_unchecked(raster: Raster) -> Self {
        debug_assert!(raster.width >= 2 && raster.height >= 2);
        Image { raster }
    }

    pub fn width(&self) -> usize {
        self.raster.width
    }

    pub fn height(&self) -> usize {
        self.raster.height
    }

    pub fn channels(&self) -> usize {
        self.raster.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.raster.data
    }

    pub fn as_raster(&self) -> &Raster {
        &self.raster
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.raster.get(x, y, c)
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width() == other.width()
            && self.height() == other.height()
            && self.channels() == other.channels()
    }

    /// Single channel `c` as a contiguous plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.raster
            .data
            .iter()
            .skip(c)
            .step_by(self.channels())
            .copied()
            .collect()
    }

    /// Bilinear sample at real pixel coordinates, clamped to the image domain.
    pub fn sample(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite sample coordinate ({x}, {y})"
            )));
        }
        let mut out = vec![0.0; self.channels()];
        self.sample_into(x, y, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn sample_into(&self, x: f64, y: f64, out: &mut [f64]) {
        let cell = Cell::locate(x, y, self.width(), self.height());
        let c = self.channels();
        let w = self.width();
        let d = self.data();
        let i00 = (cell.y0 * w + cell.x0) * c;
        let i10 = i00 + c;
        let i01 = i00 + w * c;
        let i11 = i01 + c;
        let (fx, fy) = (cell.fx, cell.fy);
        for (k, o) in out.iter_mut().enumerate() {
            let top = (1.0 - fx) * d[i00 + k] + fx * d[i10 + k];
            let bottom = (1.0 - fx) * d[i01 + k] + fx * d[i11 + k];
            *o = (1.0 - fy) * top + fy * bottom;
        }
    }

    /// Bilinear sample and its one-sided partial derivatives `[left, right]`
    /// with respect to the sample coordinates. They differ only on grid
    /// lines; a side that leaves the image has slope zero.
    #[inline]
    pub(crate) fn sample_with_slopes(
        &self,
        x: f64,
        y: f64,
        val: &mut [f64],
        dx: &mut [[f64; 2]],
        dy: &mut [[f64; 2]],
    ) {
        let cell = Cell::locate(x, y, self.width(), self.height());
        let c = self.channels();
        let w = self.width();
        let d = self.data();
        let i00 = (cell.y0 * w + cell.x0) * c;
        let i10 = i00 + c;
        let i01 = i00 + w * c;
        let i11 = i01 + c;
        let (fx, fy) = (cell.fx, cell.fy);
        for k in 0..c {
            let (a, b, e, f) = (d[i00 + k], d[i10 + k], d[i01 + k], d[i11 + k]);
            let top = (1.0 - fx) * a + fx * b;
            let bottom = (1.0 - fx) * e + fx * f;
            val[k] = (1.0 - fy) * top + fy * bottom;

            let sx = (1.0 - fy) * (b - a) + fy * (f - e);
            dx[k] = if cell.clamped_x {
                [0.0, 0.0]
            } else if fx == 0.0 {
                let left = if cell.x0 > 0 {
                    (1.0 - fy) * (a - d[i00 - c + k]) + fy * (e - d[i01 - c + k])
                } else {
                    0.0
                };
                [left, sx]
            } else if fx == 1.0 {
                let right = if cell.x0 + 2 < w {
                    (1.0 - fy) * (d[i10 + c + k] - b) + fy * (d[i11 + c + k] - f)
                } else {
                    0.0
                };
                [sx, right]
            } else {
                [sx, sx]
            };

            let sy = bottom - top;
            dy[k] = if cell.clamped_y {
                [0.0, 0.0]
            } else if fy == 0.0 {
                let left = if cell.y0 > 0 {
                    let (t0, t1) = (d[i00 - w * c + k], d[i10 - w * c + k]);
                    top - (t0 + fx * (t1 - t0))
                } else {
                    0.0
                };
                [left, sy]
            } else if fy == 1.0 {
                let right = if cell.y0 + 2 < self.height() {
                    let (t0, t1) = (d[i01 + w * c + k], d[i11 + w * c + k]);
                    t0 + fx * (t1 - t0) - bottom
                } else {
                    0.0
                };
                [sy, right]
            } else {
                [sy, sy]
            };
        }
    }
}

/// Bilinear cell of a clamped coordinate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cell {
    pub x0: usize,
    pub y0: usize,
    pub fx: f64,
    pub fy: f64,
    pub clamped_x: bool,
    pub clamped_y: bool,
}

impl Cell {
    #[inline]
    pub fn locate(x: f64, y: f64, width: usize, height: usize) -> Cell {
        let (x0, fx, clamped_x) = axis(x, width);
        let (y0, fy, clamped_y) = axis(y, height);
        Cell {
            x0,
            y0,
            fx,
            fy,
            clamped_x,
            clamped_y,
        }
    }
}

#[inline]
fn axis(t: f64, n: usize) -> (usize, f64, bool) {
    let max = (n - 1) as f64;
    let clamped = !(0.0..=max).contains(&t);
    let t = t.clamp(0.0, max);
    let i = (t.floor() as usize).min(n - 2);
    (i, t - i as f64, clamped)
}

/// Bilinear interpolation at `(x, y)` with clamp-to-edge.
pub fn bilinear_sample(img: &Image, x: f64, y: f64) -> Result<Vec<f64>> {
    img.sample(x, y)
}

/// Central differences inside, one-sided differences on the border, per
/// channel.
pub fn image_gradient(img: &Image) -> (Raster, Raster) {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut gx = vec![0.0; w * h * c];
    let mut gy = vec![0.0; w * h * c];
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                let i = (y * w + x) * c + k;
                gx[i] = if x == 0 {
                    img.get(1, y, k) - img.get(0, y, k)
                } else if x == w - 1 {
                    img.get(w - 1, y, k) - img.get(w - 2, y, k)
                } else {
                    0.5 * (img.get(x + 1, y, k) - img.get(x - 1, y, k))
                };
                gy[i] = if y == 0 {
                    img.get(x, 1, k) - img.get(x, 0, k)
                } else if y == h - 1 {
                    img.get(x, h - 1, k) - img.get(x, h - 2, k)
                } else {
                    0.5 * (img.get(x, y + 1, k) - img.get(x, y - 1, k))
                };
            }
        }
    }
    (
        Raster::from_parts(w, h, c, gx),
        Raster::from_parts(w, h, c, gy),
    )
}

/// Samples `img2` at `p + flow[p]` for every pixel `p`.
pub fn warp_backward(img2: &Image, flow: &FlowField) -> Result<Image> {
    let (w, h, c) = (img2.width(), img2.height(), img2.channels());
    if flow.width() != w || flow.height() != h {
        return Err(Error::invalid(format!(
            "flow is {}x{} but image is {w}x{h}",
            flow.width(),
            flow.height()
        )));
    }
    let mut out = vec![0.0; w * h * c];
    out.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            img2.sample_into(x as f64 + u, y as f64 + v, &mut row[x * c..(x + 1) * c]);
        }
    });
    Ok(Image::from_raster_unchecked(Raster::from_parts(w, h, c, out)))
}
