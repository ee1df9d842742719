//! Flat `key = value` configuration for the solver and energy.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! errors. `lambda_s` takes a comma-separated list (finest level first).

use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::SolverConfig;

pub const KEYS: [&str; 14] = [
    "alpha",
    "beta",
    "lambda_theta",
    "lambda_z",
    "lambda_dc",
    "lambda_df",
    "lambda_s",
    "levels",
    "max_iters_per_level",
    "step_init",
    "backtrack_factor",
    "min_step",
    "rel_tol",
    "lffm_window",
];

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: '{value}' is not a finite number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: '{value}' is not a nonnegative integer")))
}

/// Sets one key on `cfg`.
pub fn apply(cfg: &mut SolverConfig, key: &str, value: &str) -> Result<()> {
    let value = value.trim();
    let w = &mut cfg.weights;
    match key {
        "alpha" => w.alpha = parse_f64(key, value)?,
        "beta" => w.beta = parse_f64(key, value)?,
        "lambda_theta" => w.lambda_theta = parse_f64(key, value)?,
        "lambda_z" => w.lambda_z = parse_f64(key, value)?,
        "lambda_dc" => w.lambda_dc = parse_f64(key, value)?,
        "lambda_df" => w.lambda_df = parse_f64(key, value)?,
        "lambda_s" => {
            w.lambda_s = if value.is_empty() {
                Vec::new()
            } else {
                value
                    .split(',')
                    .map(|v| parse_f64(key, v.trim()))
                    .collect::<Result<_>>()?
            }
        }
        "levels" => cfg.levels = parse_usize(key, value)?,
        "max_iters_per_level" => cfg.max_iters_per_level = parse_usize(key, value)?,
        "step_init" => cfg.step_init = parse_f64(key, value)?,
        "backtrack_factor" => cfg.backtrack_factor = parse_f64(key, value)?,
        "min_step" => cfg.min_step = parse_f64(key, value)?,
        "rel_tol" => cfg.rel_tol = parse_f64(key, value)?,
        "lffm_window" => cfg.lffm_window = parse_usize(key, value)?,
        _ => return Err(Error::Config(format!("unknown key '{key}'"))),
    }
    Ok(())
}

/// Applies every `key = value` line of `text` on top of `cfg`.
pub fn apply_str(cfg: &mut SolverConfig, text: &str) -> Result<()> {
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        apply(cfg, key.trim(), value)
            .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
    }
    Ok(())
}

pub fn load(path: impl AsRef<Path>, cfg: &mut SolverConfig) -> Result<()> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    apply_str(cfg, &text)
}

/// Renders `cfg` in the file format; parsing the result reproduces `cfg`.
pub fn to_string(cfg: &SolverConfig) -> String {
    let w = &cfg.weights;
    let lambda_s: Vec<String> = w.lambda_s.iter().map(|v| v.to_string()).collect();
    format!(
        "alpha = {}\nbeta = {}\nlambda_theta = {}\nlambda_z = {}\nlambda_dc = {}\nlambda_df = {}\n\
         lambda_s = {}\nlevels = {}\nmax_iters_per_level = {}\nstep_init = {}\n\
         backtrack_factor = {}\nmin_step = {}\nrel_tol = {}\nlffm_window = {}\n",
        w.alpha,
        w.beta,
        w.lambda_theta,
        w.lambda_z,
        w.lambda_dc,
        w.lambda_df,
        lambda_s.join(","),
        cfg.levels,
        cfg.max_iters_per_level,
        cfg.step_init,
        cfg.backtrack_factor,
        cfg.min_step,
        cfg.rel_tol,
        cfg.lffm_window,
    )
}
