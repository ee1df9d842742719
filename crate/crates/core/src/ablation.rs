//! Energy-term ablation over one image pair with ground truth.

use serde::Serialize;

use crate::energy::EnergyWeights;
use crate::error::Result;
use crate::flow::FlowField;
use crate::image::Image;
use crate::metrics::evaluate_pair;
use crate::solver::{estimate_flow, SolverConfig};

/// One solver configuration of the ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: &'static str,
    pub config: SolverConfig,
}

/// The five configurations, each derived from `base`: photometric only,
/// plus decomposition, plus deformation, the full energy, and the full
/// energy with fusion. Fusion is off in all but the last; the last uses the
/// window of `base`, or 3 if `base` has fusion off.
pub fn variants(base: &SolverConfig) -> Vec<Variant> {
    let w = &base.weights;
    let no_fusion = |weights: EnergyWeights| SolverConfig {
        weights,
        lffm_window: 0,
        ..base.clone()
    };
    let photometric = EnergyWeights {
        lambda_dc: 0.0,
        lambda_df: 0.0,
        ..w.clone()
    };
    let window = if base.lffm_window == 0 { 3 } else { base.lffm_window };
    vec![
        Variant {
            name: "photometric_only",
            config: no_fusion(photometric),
        },
        Variant {
            name: "plus_decomposition",
            config: no_fusion(EnergyWeights {
                lambda_df: 0.0,
                ..w.clone()
            }),
        },
        Variant {
            name: "plus_deformation",
            config: no_fusion(EnergyWeights {
                lambda_dc: 0.0,
                ..w.clone()
            }),
        },
        Variant {
            name: "full",
            config: no_fusion(w.clone()),
        },
        Variant {
            name: "full_lffm",
            config: SolverConfig {
                lffm_window: window,
                ..base.clone()
            },
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub epe_mean: f64,
    pub epe_median: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub baseline_psnr_db: f64,
}

/// Solves `i1 → i2` under every variant and scores each flow against `gt`.
pub fn run_ablation(
    i1: &Image,
    i2: &Image,
    gt: &FlowField,
    base: &SolverConfig,
    margin: usize,
) -> Result<Vec<AblationRow>> {
    variants(base)
        .into_iter()
        .map(|v| {
            let result = estimate_flow(i1, i2, &v.config)?;
            let report = evaluate_pair(i1, i2, &result.flow, Some(gt), margin)?;
            Ok(AblationRow {
                name: v.name.to_string(),
                epe_mean: report.epe_mean.unwrap_or(f64::NAN),
                epe_median: report.epe_median.unwrap_or(f64::NAN),
                psnr_db: report.psnr_db,
                ssim: report.ssim,
                baseline_psnr_db: report.baseline_psnr_db,
            })
        })
        .collect()
}

/// Renders rows as CSV with a header line.
pub fn to_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("name,epe_mean,epe_median,psnr_db,ssim,baseline_psnr_db\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name, r.epe_mean, r.epe_median, r.psnr_db, r.ssim, r.baseline_psnr_db
        ));
    }
    out
}
