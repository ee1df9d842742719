//! Warp-based evaluation: PSNR and SSIM between the first image and the
//! second image warped back by the estimated flow, plus endpoint error when
//! ground truth exists.

use serde::{Serialize, Serializer};

use crate::energy::ssim_map;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{warp_backward, Image};

/// `10 log10((2ⁿ − 1)² / MSE)` with MSE on the `0..2ⁿ − 1` scale. Identical
/// images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, bit_depth: u32) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid("psnr: image shapes differ"));
    }
    let peak = (2f64.powi(bit_depth as i32)) - 1.0;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = (x - y) * peak;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean of the per-pixel SSIM map.
pub fn ssim_global(a: &Image, b: &Image) -> Result<f64> {
    Ok(ssim_map(a, b)?.mean())
}

/// Mean and median endpoint error over pixels at least `margin` pixels away
/// from every border.
pub fn epe(flow: &FlowField, gt: &FlowField, margin: usize) -> Result<(f64, f64)> {
    if flow.width() != gt.width() || flow.height() != gt.height() {
        return Err(Error::invalid("epe: flow shapes differ"));
    }
    let (w, h) = (flow.width(), flow.height());
    if 2 * margin >= w || 2 * margin >= h {
        return Err(Error::invalid(format!(
            "epe: margin {margin} leaves no interior in {w}x{h}"
        )));
    }
    let mut errs = Vec::with_capacity((w - 2 * margin) * (h - 2 * margin));
    for y in margin..h - margin {
        for x in margin..w - margin {
            let (u, v) = flow.get(x, y);
            let (gu, gv) = gt.get(x, y);
            errs.push((u - gu).hypot(v - gv));
        }
    }
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    let median = if n % 2 == 1 {
        errs[n / 2]
    } else {
        0.5 * (errs[n / 2 - 1] + errs[n / 2])
    };
    Ok((mean, median))
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(serialize_with = "ser_db")]
    pub psnr_db: f64,
    pub ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epe_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epe_median: Option<f64>,
    #[serde(serialize_with = "ser_db")]
    pub baseline_psnr_db: f64,
}

impl EvalReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Default border band excluded from endpoint error.
pub const DEFAULT_EPE_MARGIN: usize = 5;

/// Warps `i2` back by `flow` and compares it with `i1`. `gt` adds endpoint
/// error over the interior defined by `margin`.
pub fn evaluate_pair(
    i1: &Image,
    i2: &Image,
    flow: &FlowField,
    gt: Option<&FlowField>,
    margin: usize,
) -> Result<EvalReport> {
    if !i1.same_shape(i2) {
        return Err(Error::invalid("evaluate: image shapes differ"));
    }
    let pseudo = warp_backward(i2, flow)?;
    let (epe_mean, epe_median) = match gt {
        Some(gt) => {
            let (m, med) = epe(flow, gt, margin)?;
            (Some(m), Some(med))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        psnr_db: psnr(i1, &pseudo, 8)?,
        ssim: ssim_global(i1, &pseudo)?,
        epe_mean,
        epe_median,
        baseline_psnr_db: psnr(i1, i2, 8)?,
    })
}
