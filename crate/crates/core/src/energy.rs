//! The self-supervised energy and its gradient with respect to the flow.
//!
//! Per pyramid level `s` the energy is
//!
//! ```text
//! E_s = L_ph + λ_dc · L_dc + λ_df · L_df
//! ```
//!
//! where `L_ph` is the SSIM + L1 photometric loss between the first image and
//! the backward-warped second image, `L_dc` penalizes the velocity-gradient
//! decomposition of the flow and `L_df` penalizes spatial variation of the
//! local area-change ratio. Both regularizers are multiplied per pixel by the
//! anti-edge weight `1 − exp(−β ‖∇I₁‖₁)`. Every loss is a spatial mean.
//!
//! The multi-scale objective is `Σ_{s=0}^{l−2} λ_s E_s`; the coarsest level
//! only provides the (zero) initialization.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{decompose, deformation_ratio, FlowField, RatioWindow};
use crate::image::{image_gradient, warp_backward, Cell, Image, Raster};
use crate::pyramid::ImagePyramid;
use crate::stencil::{box3, box3_adjoint, forward_dx, forward_dx_adjoint, forward_dy, forward_dy_adjoint};

/// SSIM stabilizer for the means on `[0, 1]` data, `(0.01)²`.
pub const SSIM_C1: f64 = 1e-4;
/// SSIM stabilizer for the (co)variances on `[0, 1]` data, `(0.03)²`.
pub const SSIM_C2: f64 = 9e-4;

/// Scalar hyperparameters of the energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyWeights {
    /// Balance between the SSIM and L1 parts of the photometric loss.
    pub alpha: f64,
    /// Edge sensitivity of the anti-edge weight.
    pub beta: f64,
    pub lambda_theta: f64,
    pub lambda_z: f64,
    pub lambda_dc: f64,
    pub lambda_df: f64,
    /// Per-scale weights, index 0 = finest. Missing entries are 1.0.
    pub lambda_s: Vec<f64>,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            alpha: 0.85,
            beta: 10.0,
            lambda_theta: 0.01,
            lambda_z: 0.01,
            lambda_dc: 75.0,
            lambda_df: 0.01,
            lambda_s: Vec::new(),
        }
    }
}

impl EnergyWeights {
    /// Only the photometric term.
    pub fn photometric_only() -> Self {
        EnergyWeights {
            lambda_dc: 0.0,
            lambda_df: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.alpha,
            self.beta,
            self.lambda_theta,
            self.lambda_z,
            self.lambda_dc,
            self.lambda_df,
        ]
        .iter()
        .chain(&self.lambda_s)
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("energy weights must be finite"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha = {} not in [0, 1]", self.alpha)));
        }
        if self.beta <= 0.0 {
            return Err(Error::invalid(format!("beta = {} must be positive", self.beta)));
        }
        let lambdas = [self.lambda_theta, self.lambda_z, self.lambda_dc, self.lambda_df];
        if lambdas.iter().chain(&self.lambda_s).any(|&l| l < 0.0) {
            return Err(Error::invalid("lambda weights must be nonnegative"));
        }
        Ok(())
    }

    pub fn scale_weight(&self, s: usize) -> f64 {
        self.lambda_s.get(s).copied().unwrap_or(1.0)
    }
}

/// Unweighted loss terms of one level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LevelLoss {
    pub photometric: f64,
    pub decomposition: f64,
    pub deformation: f64,
}

impl LevelLoss {
    /// `L_ph + λ_dc L_dc + λ_df L_df`.
    pub fn combined(&self, w: &EnergyWeights) -> f64 {
        self.photometric + w.lambda_dc * self.decomposition + w.lambda_df * self.deformation
    }
}

/// Scale-weighted loss terms summed over the optimized levels.
///
/// `total = photometric + λ_dc · decomposition + λ_df · deformation`, where
/// each aggregate is `Σ_s λ_s · term_s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub photometric: f64,
    pub decomposition: f64,
    pub deformation: f64,
    pub total: f64,
    pub per_scale: Vec<LevelLoss>,
}

impl LossBreakdown {
    pub fn from_levels(per_scale: Vec<LevelLoss>, w: &EnergyWeights) -> Self {
        let (mut ph, mut dc, mut df, mut total) = (0.0, 0.0, 0.0, 0.0);
        for (s, l) in per_scale.iter().enumerate() {
            let ls = w.scale_weight(s);
            ph += ls * l.photometric;
            dc += ls * l.decomposition;
            df += ls * l.deformation;
            total += ls * l.combined(w);
        }
        LossBreakdown {
            photometric: ph,
            decomposition: dc,
            deformation: df,
            total,
            per_scale,
        }
    }
}

fn check_same(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

fn check_flow(flow: &FlowField, img: &Image) -> Result<()> {
    if flow.width() != img.width() || flow.height() != img.height() {
        return Err(Error::invalid(format!(
            "flow is {}x{} but image is {}x{}",
            flow.width(),
            flow.height(),
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Local first and second moments of one channel over mirrored 3×3 windows.
struct Moments {
    mean: Vec<f64>,
    sq: Vec<f64>,
}

impl Moments {
    fn of(plane: &[f64], w: usize, h: usize) -> Self {
        let sq: Vec<f64> = plane.iter().map(|v| v * v).collect();
        Moments {
            mean: box3(plane, w, h),
            sq: box3(&sq, w, h),
        }
    }
}

#[inline]
fn ssim_value(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2);
    let den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2);
    num / den
}

fn ssim_plane(a: &[f64], ma: &Moments, b: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mb = Moments::of(b, w, h);
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let e_ab = box3(&ab, w, h);
    (0..w * h)
        .map(|i| {
            let (mu_a, mu_b) = (ma.mean[i], mb.mean[i]);
            ssim_value(
                mu_a,
                mu_b,
                ma.sq[i] - mu_a * mu_a,
                mb.sq[i] - mu_b * mu_b,
                e_ab[i] - mu_a * mu_b,
            )
        })
        .collect()
}

/// Per-pixel SSIM over mirrored 3×3 uniform windows, averaged over channels.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Raster> {
    check_same(a, b)?;
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let mut acc = vec![0.0; w * h];
    for k in 0..c {
        let (pa, pb) = (a.plane(k), b.plane(k));
        let s = ssim_plane(&pa, &Moments::of(&pa, w, h), &pb, w, h);
        for (o, v) in acc.iter_mut().zip(s) {
            *o += v;
        }
    }
    for o in acc.iter_mut() {
        *o /= c as f64;
    }
    Ok(Raster::from_parts(w, h, 1, acc))
}

/// `mean_p [ α (1 − SSIM_p) / 2 + (1 − α) mean_c |warped − i1s| ]`.
pub fn photometric_loss(i1s: &Image, warped: &Image, w: &EnergyWeights) -> Result<f64> {
    check_same(i1s, warped)?;
    let ssim = ssim_map(i1s, warped)?;
    let n = (i1s.width() * i1s.height()) as f64;
    let ssim_term = ssim.data().iter().map(|s| (1.0 - s) / 2.0).sum::<f64>() / n;
    let l1 = i1s
        .data()
        .iter()
        .zip(warped.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / i1s.data().len() as f64;
    Ok(w.alpha * ssim_term + (1.0 - w.alpha) * l1)
}

/// `1 − exp(−β ‖∇I‖₁)` per pixel, with `‖∇I‖₁` the channel mean of
/// `|gx| + |gy|`.
pub fn anti_edge_weight(i1s: &Image, beta: f64) -> Raster {
    let (gx, gy) = image_gradient(i1s);
    let (w, h, c) = (i1s.width(), i1s.height(), i1s.channels());
    let data = (0..w * h)
        .map(|p| {
            let g: f64 = (0..c)
                .map(|k| gx.data()[p * c + k].abs() + gy.data()[p * c + k].abs())
                .sum::<f64>()
                / c as f64;
            -(-beta * g).exp_m1()
        })
        .collect();
    Raster::from_parts(w, h, 1, data)
}

fn decomposition_from_weight(flow: &FlowField, weight: &[f64], w: &EnergyWeights) -> Result<f64> {
    let d = decompose(flow)?;
    let sum: f64 = (0..flow.len())
        .map(|p| {
            weight[p]
                * (d.eps_xx[p].abs()
                    + d.eps_yy[p].abs()
                    + w.lambda_theta * 2.0 * d.eps_xy[p].abs()
                    + w.lambda_z * 2.0 * d.omega[p].abs())
        })
        .sum();
    Ok(sum / flow.len() as f64)
}

fn deformation_from_weight(flow: &FlowField, weight: &[f64]) -> f64 {
    let (wd, ht) = (flow.width(), flow.height());
    let r = deformation_ratio(flow);
    let rx = forward_dx(&r.r, wd, ht);
    let ry = forward_dy(&r.r, wd, ht);
    let sum: f64 = (0..flow.len())
        .map(|p| weight[p] * (rx[p].abs() + ry[p].abs()))
        .sum();
    sum / flow.len() as f64
}

/// Edge-weighted L1 norm of the decomposition rates:
/// `mean_p w_p (|ε_xx| + |ε_yy| + 2 λ_Θ |ε_xy| + 2 λ_Z |ω|)`.
pub fn decomposition_loss(flow: &FlowField, i1s: &Image, w: &EnergyWeights) -> Result<f64> {
    check_flow(flow, i1s)?;
    let weight = anti_edge_weight(i1s, w.beta);
    decomposition_from_weight(flow, weight.data(), w)
}

/// Edge-weighted L1 norm of the forward-difference gradient of the area
/// ratio `R`.
pub fn deformation_loss(flow: &FlowField, i1s: &Image, w: &EnergyWeights) -> Result<f64> {
    check_flow(flow, i1s)?;
    let weight = anti_edge_weight(i1s, w.beta);
    Ok(deformation_from_weight(flow, weight.data()))
}

/// Multi-scale energy over levels `0..=l−2` (level 0 alone for a one-level
/// pyramid). `flows[s]` is the flow at level `s`.
pub fn total_energy(
    pyr1: &ImagePyramid,
    pyr2: &ImagePyramid,
    flows: &[FlowField],
    w: &EnergyWeights,
) -> Result<LossBreakdown> {
    w.validate()?;
    if pyr1.len() != pyr2.len() {
        return Err(Error::invalid("pyramids have different depths"));
    }
    let optimized = optimized_levels(pyr1.len());
    if flows.len() < optimized {
        return Err(Error::invalid(format!(
            "expected flows for {optimized} levels, got {}",
            flows.len()
        )));
    }
    let per_scale = (0..optimized)
        .map(|s| LevelEnergy::new(pyr1.level(s), pyr2.level(s), w)?.terms(&flows[s]))
        .collect::<Result<Vec<_>>>()?;
    Ok(LossBreakdown::from_levels(per_scale, w))
}

/// Number of levels that enter the objective for a pyramid of depth `l`.
pub fn optimized_levels(l: usize) -> usize {
    l.saturating_sub(1).max(1)
}

/// `∂E_s/∂flow` for a single level.
pub fn energy_gradient(
    i1s: &Image,
    i2s: &Image,
    flow: &FlowField,
    w: &EnergyWeights,
) -> Result<FlowField> {
    Ok(LevelEnergy::new(i1s, i2s, w)?.gradient(flow)?.1)
}

/// One pyramid level's energy with the flow-independent parts cached.
pub struct LevelEnergy<'a> {
    i1: &'a Image,
    i2: &'a Image,
    weights: EnergyWeights,
    edge_weight: Vec<f64>,
    i1_planes: Vec<Vec<f64>>,
    i1_moments: Vec<Moments>,
}

impl<'a> LevelEnergy<'a> {
    pub fn new(i1: &'a Image, i2: &'a Image, weights: &EnergyWeights) -> Result<Self> {
        check_same(i1, i2)?;
        weights.validate()?;
        let (w, h) = (i1.width(), i1.height());
        let i1_planes: Vec<Vec<f64>> = (0..i1.channels()).map(|k| i1.plane(k)).collect();
        let i1_moments = i1_planes.iter().map(|p| Moments::of(p, w, h)).collect();
        Ok(LevelEnergy {
            i1,
            i2,
            weights: weights.clone(),
            edge_weight: anti_edge_weight(i1, weights.beta).into_data(),
            i1_planes,
            i1_moments,
        })
    }

    pub fn weights(&self) -> &EnergyWeights {
        &self.weights
    }

    pub fn edge_weight(&self) -> &[f64] {
        &self.edge_weight
    }

    fn photometric(&self, warped: &Image) -> f64 {
        let (w, h, c) = (self.i1.width(), self.i1.height(), self.i1.channels());
        let n = (w * h) as f64;
        let mut ssim_sum = 0.0;
        for k in 0..c {
            let pb = warped.plane(k);
            ssim_sum += ssim_plane(&self.i1_planes[k], &self.i1_moments[k], &pb, w, h)
                .iter()
                .map(|s| (1.0 - s) / 2.0)
                .sum::<f64>();
        }
        let l1: f64 = self
            .i1
            .data()
            .iter()
            .zip(warped.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        let nc = n * c as f64;
        self.weights.alpha * ssim_sum / nc + (1.0 - self.weights.alpha) * l1 / nc
    }

    pub fn terms(&self, flow: &FlowField) -> Result<LevelLoss> {
        check_flow(flow, self.i1)?;
        let warped = warp_backward(self.i2, flow)?;
        let decomposition = if self.weights.lambda_dc > 0.0 {
            decomposition_from_weight(flow, &self.edge_weight, &self.weights)?
        } else {
            0.0
        };
        let deformation = if self.weights.lambda_df > 0.0 {
            deformation_from_weight(flow, &self.edge_weight)
        } else {
            0.0
        };
        Ok(LevelLoss {
            photometric: self.photometric(&warped),
            decomposition,
            deformation,
        })
    }

    /// `L_ph + λ_dc L_dc + λ_df L_df` at this level (without `λ_s`).
    pub fn value(&self, flow: &FlowField) -> Result<f64> {
        Ok(self.terms(flow)?.combined(&self.weights))
    }

    /// Energy and its (sub)gradient with respect to `flow`; `sign(0) = 0`.
    pub fn gradient(&self, flow: &FlowField) -> Result<(f64, FlowField)> {
        let (mut energy, g) = self.smooth_gradient(flow)?;
        let (w, h) = (flow.width(), flow.height());
        let (mut gu, mut gv) = (g.u().to_vec(), g.v().to_vec());
        if self.weights.lambda_dc > 0.0 {
            energy += self.weights.lambda_dc * self.decomposition_grad(flow, &mut gu, &mut gv)?;
        }
        Ok((energy, FlowField::new(w, h, gu, gv)?))
    }

    /// `L_ph + λ_df L_df` and its (sub)gradient: everything except the
    /// decomposition term.
    pub fn smooth_gradient(&self, flow: &FlowField) -> Result<(f64, FlowField)> {
        check_flow(flow, self.i1)?;
        let (w, h, c) = (self.i1.width(), self.i1.height(), self.i1.channels());
        let n = w * h;
        let alpha = self.weights.alpha;

        // warped image and its one-sided derivatives w.r.t. the sample position
        let mut warped = vec![0.0; n * c];
        let mut dbx = vec![[0.0; 2]; n * c];
        let mut dby = vec![[0.0; 2]; n * c];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let (u, v) = flow.get(x, y);
                let r = p * c..(p + 1) * c;
                self.i2.sample_with_slopes(
                    x as f64 + u,
                    y as f64 + v,
                    &mut warped[r.clone()],
                    &mut dbx[r.clone()],
                    &mut dby[r],
                );
            }
        }

        // photometric value and ∂L_ph/∂warped
        let nc = (n * c) as f64;
        let ds = -alpha / (2.0 * nc);
        let mut photometric = 0.0;
        let mut grad_b = vec![0.0; n * c];
        for k in 0..c {
            let pa = &self.i1_planes[k];
            let ma = &self.i1_moments[k];
            let pb: Vec<f64> = warped.iter().skip(k).step_by(c).copied().collect();
            let mb = Moments::of(&pb, w, h);
            let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
            let e_ab = box3(&ab, w, h);
            let mut g_mu = vec![0.0; n];
            let mut g_sq = vec![0.0; n];
            let mut g_ab = vec![0.0; n];
            for i in 0..n {
                let (mu_a, mu_b) = (ma.mean[i], mb.mean[i]);
                let var_a = ma.sq[i] - mu_a * mu_a;
                let var_b = mb.sq[i] - mu_b * mu_b;
                let cov = e_ab[i] - mu_a * mu_b;
                let a1 = 2.0 * mu_a * mu_b + SSIM_C1;
                let a2 = 2.0 * cov + SSIM_C2;
                let b1 = mu_a * mu_a + mu_b * mu_b + SSIM_C1;
                let b2 = var_a + var_b + SSIM_C2;
                let den = b1 * b2;
                let s = a1 * a2 / den;
                photometric += alpha * (1.0 - s) / 2.0 / nc;
                g_mu[i] = ds * (2.0 * mu_a * (a2 - a1) / den - 2.0 * mu_b * s * (1.0 / b1 - 1.0 / b2));
                g_sq[i] = ds * (-s / b2);
                g_ab[i] = ds * (2.0 * a1 / den);
            }
            let mut adj_mu = vec![0.0; n];
            let mut adj_sq = vec![0.0; n];
            let mut adj_ab = vec![0.0; n];
            box3_adjoint(&g_mu, w, h, &mut adj_mu);
            box3_adjoint(&g_sq, w, h, &mut adj_sq);
            box3_adjoint(&g_ab, w, h, &mut adj_ab);
            let l1 = (1.0 - alpha) / nc;
            for i in 0..n {
                let diff = pb[i] - pa[i];
                photometric += l1 * diff.abs();
                grad_b[i * c + k] =
                    adj_mu[i] + 2.0 * pb[i] * adj_sq[i] + pa[i] * adj_ab[i] + l1 * sign(diff);
            }
        }

        let mut gu = vec![0.0; n];
        let mut gv = vec![0.0; n];
        for p in 0..n {
            let (mut ux, mut vy) = ([0.0; 2], [0.0; 2]);
            for k in 0..c {
                let i = p * c + k;
                for side in 0..2 {
                    ux[side] += grad_b[i] * dbx[i][side];
                    vy[side] += grad_b[i] * dby[i][side];
                }
            }
            gu[p] = descent_slope(ux);
            gv[p] = descent_slope(vy);
        }

        let mut energy = photometric;
        if self.weights.lambda_df > 0.0 {
            energy += self.weights.lambda_df * self.deformation_grad(flow, &mut gu, &mut gv);
        }
        Ok((energy, FlowField::new(w, h, gu, gv)?))
    }

    /// Adds `λ_dc ∂L_dc/∂flow` and returns `L_dc`.
    fn decomposition_grad(&self, flow: &FlowField, gu: &mut [f64], gv: &mut [f64]) -> Result<f64> {
        let (w, h) = (flow.width(), flow.height());
        let n = w * h;
        let wt = &self.weights;
        let d = decompose(flow)?;
        let k = wt.lambda_dc / n as f64;
        let mut g_ux = vec![0.0; n];
        let mut g_uy = vec![0.0; n];
        let mut g_vx = vec![0.0; n];
        let mut g_vy = vec![0.0; n];
        let mut loss = 0.0;
        for p in 0..n {
            let e = self.edge_weight[p];
            loss += e
                * (d.eps_xx[p].abs()
                    + d.eps_yy[p].abs()
                    + 2.0 * wt.lambda_theta * d.eps_xy[p].abs()
                    + 2.0 * wt.lambda_z * d.omega[p].abs());
            let shear = 2.0 * wt.lambda_theta * sign(d.eps_xy[p]);
            let rot = 2.0 * wt.lambda_z * sign(d.omega[p]);
            g_ux[p] = k * e * sign(d.eps_xx[p]);
            g_vy[p] = k * e * sign(d.eps_yy[p]);
            // ε_xy = (u_y + v_x)/2, ω = (v_x − u_y)/2
            g_uy[p] = k * e * 0.5 * (shear - rot);
            g_vx[p] = k * e * 0.5 * (shear + rot);
        }
        forward_dx_adjoint(&g_ux, w, h, gu);
        forward_dy_adjoint(&g_uy, w, h, gu);
        forward_dx_adjoint(&g_vx, w, h, gv);
        forward_dy_adjoint(&g_vy, w, h, gv);
        Ok(loss / n as f64)
    }

    /// Adds `λ_df ∂L_df/∂flow` and returns `L_df`.
    fn deformation_grad(&self, flow: &FlowField, gu: &mut [f64], gv: &mut [f64]) -> f64 {
        let (w, h) = (flow.width(), flow.height());
        let n = w * h;
        let ratio = deformation_ratio(flow);
        let rdx = forward_dx(&ratio.r, w, h);
        let rdy = forward_dy(&ratio.r, w, h);
        let k = self.weights.lambda_df / n as f64;
        let mut g_rx = vec![0.0; n];
        let mut g_ry = vec![0.0; n];
        let mut loss = 0.0;
        for p in 0..n {
            let e = self.edge_weight[p];
            loss += e * (rdx[p].abs() + rdy[p].abs());
            g_rx[p] = k * e * sign(rdx[p]);
            g_ry[p] = k * e * sign(rdy[p]);
        }
        let mut g_r = vec![0.0; n];
        forward_dx_adjoint(&g_rx, w, h, &mut g_r);
        forward_dy_adjoint(&g_ry, w, h, &mut g_r);

        // R_c = rx_c ry_c, rx_c = 1 + (Σ dx u_q − u_c Σ dx) / Σ dx²
        for y in 0..h {
            for x in 0..w {
                let c = y * w + x;
                let g = g_r[c];
                if g == 0.0 {
                    continue;
                }
                let win = RatioWindow::at(x, y, w, h);
                if win.sxx > 0.0 {
                    let ku = g * ratio.ry[c] / win.sxx;
                    for yy in win.y_lo..=win.y_hi {
                        for xx in win.x_lo..=win.x_hi {
                            gu[yy * w + xx] += ku * (xx as f64 - x as f64);
                        }
                    }
                    gu[c] -= ku * win.sum_dx;
                }
                if win.syy > 0.0 {
                    let kv = g * ratio.rx[c] / win.syy;
                    for yy in win.y_lo..=win.y_hi {
                        for xx in win.x_lo..=win.x_hi {
                            gv[yy * w + xx] += kv * (yy as f64 - y as f64);
                        }
                    }
                    gv[c] -= kv * win.sum_dy;
                }
            }
        }
        loss / n as f64
    }

    /// Discrete state of every non-smooth operation in the energy: the signs
    /// of all absolute-value arguments and the bilinear cell (and clamp
    /// state) of every warp sample. The energy is smooth along any segment
    /// on which this signature is constant.
    pub fn kink_signature(&self, flow: &FlowField) -> Result<Vec<i64>> {
        check_flow(flow, self.i1)?;
        let (w, h) = (flow.width(), flow.height());
        let mut sig = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let (u, v) = flow.get(x, y);
                let (sx, sy) = (x as f64 + u, y as f64 + v);
                let cell = Cell::locate(sx, sy, w, h);
                // exact integer positions are cell boundaries too
                sig.push(cell.x0 as i64 * 3 + i64::from(cell.fx == 0.0) + 2 * i64::from(cell.fx == 1.0));
                sig.push(cell.y0 as i64 * 3 + i64::from(cell.fy == 0.0) + 2 * i64::from(cell.fy == 1.0));
                sig.push(i64::from(cell.clamped_x) + 2 * i64::from(sx < 0.0));
                sig.push(i64::from(cell.clamped_y) + 2 * i64::from(sy < 0.0));
            }
        }
        let warped = warp_backward(self.i2, flow)?;
        sig.extend(
            warped
                .data()
                .iter()
                .zip(self.i1.data())
                .map(|(b, a)| sign(b - a) as i64),
        );
        let d = decompose(flow)?;
        for p in [&d.eps_xx, &d.eps_yy, &d.eps_xy, &d.omega] {
            sig.extend(p.iter().map(|&e| sign(e) as i64));
        }
        let r = deformation_ratio(flow);
        sig.extend(forward_dx(&r.r, w, h).iter().map(|&e| sign(e) as i64));
        sig.extend(forward_dy(&r.r, w, h).iter().map(|&e| sign(e) as i64));
        Ok(sig)
    }
}

/// Gradient component from the one-sided derivatives `[left, right]` of a
/// coordinate: the steeper descending side, or zero at a local minimum.
/// Where the two agree this is the ordinary derivative.
#[inline]
fn descent_slope([left, right]: [f64; 2]) -> f64 {
    if left == right {
        return left;
    }
    match (right < 0.0, left > 0.0) {
        (true, true) => {
            if -right >= left {
                right
            } else {
                left
            }
        }
        (true, false) => right,
        (false, true) => left,
        (false, false) => 0.0,
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pyramid::build_pyramid;
    use crate::stencil::reflect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(w, h, c, (0..w * h * c).map(|_| rng.gen()).collect()).unwrap()
    }

    // windowed statistics straight from the definition, two-pass
    fn ssim_oracle(a: &Image, b: &Image) -> Vec<f64> {
        let (w, h, c) = (a.width(), a.height(), a.channels());
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut total = 0.0;
                for k in 0..c {
                    let mut xs = Vec::new();
                    let mut ys = Vec::new();
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let xx = reflect(x as isize + dx, w);
                            let yy = reflect(y as isize + dy, h);
                            xs.push(a.get(xx, yy, k));
                            ys.push(b.get(xx, yy, k));
                        }
                    }
                    let mx = xs.iter().sum::<f64>() / 9.0;
                    let my = ys.iter().sum::<f64>() / 9.0;
                    let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / 9.0;
                    let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / 9.0;
                    let cxy = xs.iter().zip(&ys).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / 9.0;
                    total += (2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)
                        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                }
                out[y * w + x] = total / c as f64;
            }
        }
        out
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = random_image(7, 6, 3, 1);
        let s = ssim_map(&a, &a).unwrap();
        assert!(s.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn ssim_black_vs_white() {
        let a = Image::constant(5, 5, 1, 0.0).unwrap();
        let b = Image::constant(5, 5, 1, 1.0).unwrap();
        let s = ssim_map(&a, &b).unwrap();
        let expected = SSIM_C1 * SSIM_C2 / ((1.0 + SSIM_C1) * SSIM_C2);
        assert!(s.data().iter().all(|v| (v - expected).abs() < 1e-15));
        assert!((expected - 9.999e-5).abs() < 1e-8);
    }

    #[test]
    fn ssim_matches_windowed_oracle() {
        for seed in 0..3 {
            let a = random_image(8, 8, 1 + 2 * (seed as usize % 2), seed);
            let b = random_image(8, 8, a.channels(), seed + 100);
            let s = ssim_map(&a, &b).unwrap();
            for (x, y) in s.data().iter().zip(ssim_oracle(&a, &b)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ssim_dim_mismatch() {
        let a = random_image(8, 8, 1, 0);
        let b = random_image(8, 7, 1, 0);
        assert!(ssim_map(&a, &b).is_err());
        assert!(photometric_loss(&a, &b, &EnergyWeights::default()).is_err());
    }

    #[test]
    fn photometric_zero_and_pure_l1() {
        let a = random_image(6, 6, 3, 4);
        assert!(photometric_loss(&a, &a, &EnergyWeights::default()).unwrap().abs() < 1e-12);

        let a = Image::constant(6, 6, 1, 0.2).unwrap();
        let b = Image::constant(6, 6, 1, 0.7).unwrap();
        let w = EnergyWeights {
            alpha: 0.0,
            ..Default::default()
        };
        assert!((photometric_loss(&a, &b, &w).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn photometric_recombines() {
        let a = random_image(9, 7, 3, 5);
        let b = random_image(9, 7, 3, 6);
        let s = ssim_oracle(&a, &b);
        let ssim_part = s.iter().map(|v| (1.0 - v) / 2.0).sum::<f64>() / s.len() as f64;
        let l1 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>()
            / a.data().len() as f64;
        let expected = 0.85 * ssim_part + 0.15 * l1;
        let got = photometric_loss(&a, &b, &EnergyWeights::default()).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn anti_edge_weight_values() {
        let flat = Image::constant(6, 6, 3, 0.4).unwrap();
        assert!(anti_edge_weight(&flat, 10.0).data().iter().all(|&v| v == 0.0));

        // ramp with |gx| = 0.1, gy = 0
        let ramp = Image::from_fn(8, 4, 1, |x, _, _| 0.1 * x as f64).unwrap();
        let wt = anti_edge_weight(&ramp, 10.0);
        for v in wt.data() {
            assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        }
        assert!((wt.data()[0] - 0.6321).abs() < 1e-4);

        let step = Image::from_fn(8, 4, 1, |x, _, _| if x < 4 { 0.0 } else { 1.0 }).unwrap();
        let wt = anti_edge_weight(&step, 1e4);
        assert!((wt.get(3, 1, 0) - 1.0).abs() < 1e-12);
        assert!(wt.data().iter().all(|v| (0.0..1.0 + 1e-15).contains(v)));
    }

    #[test]
    fn decomposition_zero_sets() {
        let img = random_image(8, 8, 1, 7);
        let w = EnergyWeights::default();
        let flow = FlowField::constant(8, 8, 1.5, -0.5);
        assert_eq!(decomposition_loss(&flow, &img, &w).unwrap(), 0.0);

        let flat = Image::constant(8, 8, 1, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let flow = FlowField::from_fn(8, 8, |_, _| (rng.gen(), rng.gen()));
        assert_eq!(decomposition_loss(&flow, &flat, &w).unwrap(), 0.0);
    }

    #[test]
    fn decomposition_of_dilation_on_uniform_weight() {
        // a ramp has the same gradient magnitude at every pixel
        let img = Image::from_fn(10, 10, 1, |x, _, _| 0.05 * x as f64).unwrap();
        let w = EnergyWeights::default();
        let s = 0.02;
        let flow = FlowField::from_fn(10, 10, |x, y| (s * x as f64, s * y as f64));
        let wbar = 1.0 - (-10.0f64 * 0.05).exp();
        let mut sum = 0.0;
        let d = decompose(&flow).unwrap();
        for p in 0..100 {
            sum += wbar * (d.eps_xx[p].abs() + d.eps_yy[p].abs());
        }
        let got = decomposition_loss(&flow, &img, &w).unwrap();
        assert!((got - sum / 100.0).abs() < 1e-12);
        assert!((got - 0.04 * wbar).abs() < 1e-12);
    }

    #[test]
    fn deformation_zero_sets_and_composition() {
        let img = random_image(16, 16, 1, 9);
        let w = EnergyWeights::default();
        assert_eq!(deformation_loss(&FlowField::zeros(16, 16), &img, &w).unwrap(), 0.0);
        let dil = FlowField::from_fn(16, 16, |x, y| (0.05 * x as f64, 0.05 * y as f64));
        assert!(deformation_loss(&dil, &img, &w).unwrap().abs() < 1e-12);

        let radial = FlowField::from_fn(16, 16, |x, y| {
            let (dx, dy) = (x as f64 - 8.0, y as f64 - 8.0);
            let s = 0.002 * (dx * dx + dy * dy).sqrt();
            (s * dx, s * dy)
        });
        let got = deformation_loss(&radial, &img, &w).unwrap();
        assert!(got > 0.0);
        let r = deformation_ratio(&radial);
        let wt = anti_edge_weight(&img, w.beta);
        let mut sum = 0.0;
        for y in 0..16 {
            for x in 0..16 {
                let p = y * 16 + x;
                let gx = if x < 15 { r.r[p + 1] - r.r[p] } else { r.r[p] - r.r[p - 1] };
                let gy = if y < 15 { r.r[p + 16] - r.r[p] } else { r.r[p] - r.r[p - 16] };
                sum += wt.data()[p] * (gx.abs() + gy.abs());
            }
        }
        assert!((got - sum / 256.0).abs() < 1e-14);
    }

    #[test]
    fn total_energy_zero_for_identical_pair() {
        let img = random_image(32, 32, 1, 3);
        let pyr = build_pyramid(&img, 3).unwrap();
        let flows: Vec<_> = pyr.levels().iter().map(|l| FlowField::zeros(l.width(), l.height())).collect();
        let b = total_energy(&pyr, &pyr, &flows, &EnergyWeights::default()).unwrap();
        assert!(b.total.abs() < 1e-12);
        assert_eq!(b.per_scale.len(), 2);
    }

    #[test]
    fn total_energy_two_levels_uses_level_zero_only() {
        let a = random_image(8, 8, 1, 1);
        let b = random_image(8, 8, 1, 2);
        let (pa, pb) = (build_pyramid(&a, 2).unwrap(), build_pyramid(&b, 2).unwrap());
        assert_eq!(pa.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flow = FlowField::from_fn(8, 8, |_, _| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let w = EnergyWeights::default();
        let br = total_energy(&pa, &pb, &[flow.clone()], &w).unwrap();
        let warped = warp_backward(&b, &flow).unwrap();
        let expected = photometric_loss(&a, &warped, &w).unwrap()
            + 75.0 * decomposition_loss(&flow, &a, &w).unwrap()
            + 0.01 * deformation_loss(&flow, &a, &w).unwrap();
        assert!((br.total - expected).abs() < 1e-12);
        assert!(total_energy(&pa, &pb, &[], &w).is_err());
    }

    #[test]
    fn gradient_zero_at_photometric_minimum() {
        let a = random_image(6, 6, 3, 2);
        let w = EnergyWeights::photometric_only();
        let g = energy_gradient(&a, &a, &FlowField::zeros(6, 6), &w).unwrap();
        assert!(g.max_abs() < 1e-15);
    }

    #[test]
    fn gradient_value_matches_terms() {
        let a = random_image(7, 6, 3, 12);
        let b = random_image(7, 6, 3, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let flow = FlowField::from_fn(7, 6, |_, _| (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)));
        let level = LevelEnergy::new(&a, &b, &EnergyWeights::default()).unwrap();
        let (e, _) = level.gradient(&flow).unwrap();
        assert!((e - level.value(&flow).unwrap()).abs() < 1e-12);
    }

    // dilation u = s x: ε_xx = ε_yy = s > 0 everywhere, so the decomposition
    // gradient is w/N (Dxᵀ 1) for u; nonzero only where the stencil does not
    // telescope: -w/N at column 0 and +w/N at the last column.
    #[test]
    fn decomposition_gradient_sign_pattern_for_dilation() {
        let (wd, ht) = (6, 5);
        let img = Image::from_fn(wd, ht, 1, |x, _, _| 0.05 * x as f64).unwrap();
        let w = EnergyWeights {
            lambda_theta: 0.0,
            lambda_z: 0.0,
            lambda_df: 0.0,
            ..EnergyWeights::default()
        };
        let flow = FlowField::from_fn(wd, ht, |x, y| (0.02 * x as f64 + 0.3, 0.02 * y as f64 - 0.1));
        let level = LevelEnergy::new(&img, &img, &w).unwrap();
        let mut gu = vec![0.0; wd * ht];
        let mut gv = vec![0.0; wd * ht];
        level.decomposition_grad(&flow, &mut gu, &mut gv).unwrap();
        let wbar = 1.0 - (-0.5f64).exp();
        let k = 75.0 * wbar / (wd * ht) as f64;
        for y in 0..ht {
            for x in 0..wd {
                let expected_u = match x {
                    0 => -k,
                    4 => -k,
                    5 => 2.0 * k,
                    _ => 0.0,
                };
                assert!((gu[y * wd + x] - expected_u).abs() < 1e-12, "u at ({x},{y})");
                let expected_v = match y {
                    0 => -k,
                    3 => -k,
                    4 => 2.0 * k,
                    _ => 0.0,
                };
                assert!((gv[y * wd + x] - expected_v).abs() < 1e-12, "v at ({x},{y})");
            }
        }
    }
}
