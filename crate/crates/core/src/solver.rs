//! Coarse-to-fine minimization of the multi-scale energy.
//!
//! The flow starts at zero on the coarsest optimized level. Each level is
//! minimized by proximal gradient descent with backtracking, optionally
//! smoothed by local flow fusion, then upsampled (values doubled) to seed the
//! next finer level.

use serde::Serialize;

use crate::energy::{optimized_levels, total_energy, EnergyWeights, LevelEnergy, LossBreakdown};
use crate::error::{Error, Result};
use crate::flow::{upsample_flow_to, FlowField};
use crate::fusion::{context_features, fuse_flow};
use crate::image::Image;
use crate::prox::DecompositionProx;
use crate::pyramid::build_pyramid;

/// Duality-gap tolerance of the proximal step, relative to the squared
/// length of the gradient step.
const PROX_GAP: f64 = 1e-2;
const PROX_MAX_ITERS: usize = 300;
/// The step may grow up to this multiple of `step_init`.
const MAX_STEP_GROWTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Requested pyramid depth; clamped to what the image size supports.
    pub levels: usize,
    pub max_iters_per_level: usize,
    /// Initial (and largest) step length of the gradient step, in pixels
    /// per unit of per-pixel energy gradient.
    pub step_init: f64,
    pub backtrack_factor: f64,
    pub min_step: f64,
    /// Stop once an accepted step lowers the energy by less than
    /// `rel_tol · max(|E|, 1)`.
    pub rel_tol: f64,
    pub weights: EnergyWeights,
    /// Local flow fusion window: 0 (off), 3 or 5.
    pub lffm_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            levels: 8,
            max_iters_per_level: 200,
            step_init: 1.0,
            backtrack_factor: 0.5,
            min_step: 1e-6,
            rel_tol: 1e-5,
            weights: EnergyWeights::default(),
            lffm_window: 3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::invalid("levels must be at least 1"));
        }
        if self.max_iters_per_level == 0 {
            return Err(Error::invalid("max_iters_per_level must be at least 1"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::invalid(format!(
                "backtrack_factor = {} not in (0, 1)",
                self.backtrack_factor
            )));
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return Err(Error::invalid("step_init must be positive and finite"));
        }
        if !(self.min_step > 0.0 && self.min_step <= self.step_init) {
            return Err(Error::invalid("min_step must be in (0, step_init]"));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::invalid("rel_tol must be nonnegative and finite"));
        }
        if ![0, 3, 5].contains(&self.lffm_window) {
            return Err(Error::invalid(format!(
                "lffm_window must be 0, 3 or 5, got {}",
                self.lffm_window
            )));
        }
        self.weights.validate()
    }
}

/// Diagnostics of one optimized pyramid level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub width: usize,
    pub height: usize,
    /// Accepted energies; the first entry is the warm start.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Full-resolution flow.
    pub flow: FlowField,
    /// Optimized levels, finest first.
    pub levels: Vec<LevelReport>,
    /// Final flow of every optimized level, finest first.
    pub level_flows: Vec<FlowField>,
    pub breakdown: LossBreakdown,
}

impl SolveResult {
    pub fn energy_traces(&self) -> Vec<&[f64]> {
        self.levels.iter().map(|l| l.energy_trace.as_slice()).collect()
    }

    pub fn iterations_used(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.iterations).collect()
    }
}

/// Output of [`minimize_level`].
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub flow: FlowField,
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
}

/// Forward-backward descent with backtracking on one level's energy: a
/// gradient step on the photometric and deformation terms, then the proximal
/// map of the decomposition term. A step is accepted only if it strictly
/// lowers the energy; the step grows again after every acceptance.
pub fn minimize_level(
    i1s: &Image,
    i2s: &Image,
    init_flow: &FlowField,
    cfg: &SolverConfig,
) -> Result<LevelSolution> {
    let energy = LevelEnergy::new(i1s, i2s, &cfg.weights)?;
    let (w, h) = (i1s.width(), i1s.height());
    let n = (w * h) as f64;
    let mut current = energy.value(init_flow)?;
    if !current.is_finite() {
        return Err(Error::Internal(format!(
            "non-finite initial energy {current} at {w}x{h}"
        )));
    }
    let mut prox = DecompositionProx::new(w, h, energy.edge_weight(), &cfg.weights);
    let use_prox = cfg.weights.lambda_dc > 0.0;
    let mut flow = init_flow.clone();
    let mut trace = vec![current];
    let mut step = cfg.step_init;
    let mut iterations = 0;

    while iterations < cfg.max_iters_per_level {
        let grad = energy.smooth_gradient(&flow)?.1;
        let mut accepted = None;
        while step >= cfg.min_step {
            let z = flow.axpy(-step * n, &grad);
            let candidate = if use_prox {
                let moved = step * n * step * n * grad.norm_sq();
                prox.apply(&z, step, PROX_GAP * moved, PROX_MAX_ITERS).0
            } else {
                z
            };
            let e = energy.value(&candidate)?;
            if e < current {
                accepted = Some((candidate, e));
                break;
            }
            step *= cfg.backtrack_factor;
        }
        let Some((candidate, e)) = accepted else {
            break;
        };
        iterations += 1;
        // relative for energies above one, absolute below
        let decrease = (current - e) / current.abs().max(1.0);
        flow = candidate;
        current = e;
        trace.push(e);
        if decrease < cfg.rel_tol {
            break;
        }
        step = (step / cfg.backtrack_factor).min(MAX_STEP_GROWTH * cfg.step_init);
    }
    Ok(LevelSolution {
        flow,
        energy_trace: trace,
        iterations,
    })
}

/// Estimates the forward flow `i1 → i2` at full resolution.
pub fn estimate_flow(i1: &Image, i2: &Image, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if !i1.same_shape(i2) {
        return Err(Error::invalid(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            i1.width(),
            i1.height(),
            i1.channels(),
            i2.width(),
            i2.height(),
            i2.channels()
        )));
    }
    let pyr1 = build_pyramid(i1, cfg.levels)?;
    let pyr2 = build_pyramid(i2, cfg.levels)?;
    let top = optimized_levels(pyr1.len()) - 1;

    let coarsest = pyr1.level(top);
    let mut flow = FlowField::zeros(coarsest.width(), coarsest.height());
    let mut levels = Vec::new();
    let mut level_flows = Vec::new();
    for s in (0..=top).rev() {
        let sol = minimize_level(pyr1.level(s), pyr2.level(s), &flow, cfg)?;
        let mut out = sol.flow;
        if cfg.lffm_window > 0 {
            let feats = context_features(pyr1.level(s));
            out = fuse_flow(&out, &feats, cfg.lffm_window)?;
        }
        levels.push(LevelReport {
            level: s,
            width: out.width(),
            height: out.height(),
            energy_trace: sol.energy_trace,
            iterations: sol.iterations,
        });
        if s > 0 {
            let finer = pyr1.level(s - 1);
            flow = upsample_flow_to(&out, finer.width(), finer.height());
        } else {
            flow = out.clone();
        }
        level_flows.push(out);
    }
    levels.reverse();
    level_flows.reverse();
    let breakdown = total_energy(&pyr1, &pyr2, &level_flows, &cfg.weights)?;
    Ok(SolveResult {
        flow,
        levels,
        level_flows,
        breakdown,
    })
}
