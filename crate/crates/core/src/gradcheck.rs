//! Finite-difference verification of the analytic energy gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::energy::{EnergyWeights, LevelEnergy};
use crate::error::Result;
use crate::flow::FlowField;
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub seeds: u64,
    pub size: usize,
    /// Central-difference step.
    pub h: f64,
    pub tol: f64,
    /// A component is compared only if the energy has no kink within this
    /// distance of it along its own axis.
    pub kink_margin: f64,
    pub max_flow: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            seeds: 20,
            size: 6,
            h: 1e-4,
            tol: 1e-4,
            kink_margin: 1e-3,
            max_flow: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub compared: usize,
    pub skipped_near_kink: usize,
    pub max_rel_error: f64,
    pub failures: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.compared > 0
    }
}

/// `|a − b| / max(|a|, |b|, 1e-7)`; the floor keeps components that vanish
/// analytically from producing 0/0.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// A seeded random instance: two images (1 channel for even seeds, 3 for
/// odd) and a flow with components in `±max_flow`.
pub fn random_instance(seed: u64, size: usize, max_flow: f64) -> Result<(Image, Image, FlowField)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = if seed % 2 == 0 { 1 } else { 3 };
    let n = size * size * c;
    let i1 = Image::new(size, size, c, (0..n).map(|_| rng.gen()).collect())?;
    let i2 = Image::new(size, size, c, (0..n).map(|_| rng.gen()).collect())?;
    let flow = FlowField::from_fn(size, size, |_, _| {
        (
            rng.gen_range(-max_flow..max_flow),
            rng.gen_range(-max_flow..max_flow),
        )
    });
    Ok((i1, i2, flow))
}

fn nudge(flow: &FlowField, p: usize, axis: usize, d: f64) -> FlowField {
    let (w, h) = (flow.width(), flow.height());
    let mut u = flow.u().to_vec();
    let mut v = flow.v().to_vec();
    if axis == 0 {
        u[p] += d;
    } else {
        v[p] += d;
    }
    FlowField::new(w, h, u, v).expect("same shape")
}

/// Compares every flow component of every instance against central
/// differences with the default energy weights.
pub fn run(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let weights = EnergyWeights::default();
    let mut report = GradCheckReport {
        compared: 0,
        skipped_near_kink: 0,
        max_rel_error: 0.0,
        failures: 0,
    };
    for seed in 0..cfg.seeds {
        let (i1, i2, flow) = random_instance(seed, cfg.size, cfg.max_flow)?;
        let energy = LevelEnergy::new(&i1, &i2, &weights)?;
        let (_, grad) = energy.gradient(&flow)?;
        let base = energy.kink_signature(&flow)?;
        for p in 0..flow.len() {
            for axis in 0..2 {
                let smooth = [-1.0, 1.0].iter().all(|s| {
                    energy
                        .kink_signature(&nudge(&flow, p, axis, s * cfg.kink_margin))
                        .map(|sig| sig == base)
                        .unwrap_or(false)
                });
                if !smooth {
                    report.skipped_near_kink += 1;
                    continue;
                }
                let plus = energy.value(&nudge(&flow, p, axis, cfg.h))?;
                let minus = energy.value(&nudge(&flow, p, axis, -cfg.h))?;
                let fd = (plus - minus) / (2.0 * cfg.h);
                let an = if axis == 0 { grad.u()[p] } else { grad.v()[p] };
                let err = relative_error(an, fd);
                report.compared += 1;
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= cfg.tol {
                    report.failures += 1;
                }
            }
        }
    }
    Ok(report)
}
