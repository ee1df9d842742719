//! Low-pass image pyramids with a 5-tap binomial kernel.

use crate::error::{Error, Result};
use crate::image::{Image, Raster};
use crate::stencil::reflect;

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Smallest side length allowed at the coarsest level.
pub const MIN_LEVEL_SIZE: usize = 4;

/// Level 0 is the input; each following level halves both sides (rounding up).
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<Image>,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[Image] {
        &self.levels
    }

    pub fn level(&self, s: usize) -> &Image {
        &self.levels[s]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn downscale_factor(&self) -> usize {
        2
    }
}

/// Builds up to `levels` levels; the depth is clamped so that the coarsest
/// level keeps both sides ≥ 4.
pub fn build_pyramid(img: &Image, levels: usize) -> Result<ImagePyramid> {
    if img.width() < MIN_LEVEL_SIZE || img.height() < MIN_LEVEL_SIZE {
        return Err(Error::invalid(format!(
            "image {}x{} is smaller than {MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}",
            img.width(),
            img.height()
        )));
    }
    let depth = supported_depth(img.width(), img.height(), levels.max(1));
    let mut out = Vec::with_capacity(depth);
    out.push(img.clone());
    while out.len() < depth {
        let next = downsample(out.last().expect("non-empty"));
        out.push(next);
    }
    Ok(ImagePyramid { levels: out })
}

/// Number of levels `build_pyramid` produces for an image of this size.
pub fn supported_depth(width: usize, height: usize, requested: usize) -> usize {
    let (mut w, mut h) = (width, height);
    let mut depth = 1;
    while depth < requested {
        let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
        if nw < MIN_LEVEL_SIZE || nh < MIN_LEVEL_SIZE {
            break;
        }
        w = nw;
        h = nh;
        depth += 1;
    }
    depth
}

/// Binomial blur (reflect-padded, separable) followed by keeping even samples.
pub fn downsample(img: &Image) -> Image {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let src = img.data();

    // horizontal pass, only at kept columns
    let mut tmp = vec![0.0; nw * h * c];
    for y in 0..h {
        for nx in 0..nw {
            let x = 2 * nx;
            for k in 0..c {
                let mut s = 0.0;
                for (t, wt) in BINOMIAL.iter().enumerate() {
                    let xx = reflect(x as isize + t as isize - 2, w);
                    s += wt * src[(y * w + xx) * c + k];
                }
                tmp[(y * nw + nx) * c + k] = s;
            }
        }
    }
    let mut out = vec![0.0; nw * nh * c];
    for ny in 0..nh {
        let y = 2 * ny;
        for x in 0..nw {
            for k in 0..c {
                let mut s = 0.0;
                for (t, wt) in BINOMIAL.iter().enumerate() {
                    let yy = reflect(y as isize + t as isize - 2, h);
                    s += wt * tmp[(yy * nw + x) * c + k];
                }
                // rounding can push a convex combination a hair outside [0, 1]
                out[(ny * nw + x) * c + k] = s.clamp(0.0, 1.0);
            }
        }
    }
    Image::from_raster_unchecked(Raster::from_parts(nw, nh, c, out))
}
