//! Proximal map of the weighted strain/rotation penalty.
//!
//! For `K f = (∂x u, ∂y v, ∂y u + ∂x v, ∂x v − ∂y u)` (forward differences)
//! and per-pixel bounds `b_p = τ λ_dc w_p (1, 1, λ_θ, λ_z)`, this computes
//!
//! ```text
//! argmin_f ½‖f − z‖² + Σ_p Σ_k b_pk |(K f)_pk|
//! ```
//!
//! through its dual `min_{|q| ≤ b} ½‖z − Kᵀq‖²`, solved by accelerated
//! projected gradient; the primal point is `f = z − Kᵀq`.

use crate::energy::EnergyWeights;
use crate::flow::FlowField;
use crate::stencil::{forward_dx, forward_dx_adjoint, forward_dy, forward_dy_adjoint};

/// Upper bound on `‖K‖²` for the copied-border forward differences.
pub(crate) const K_NORM_SQ_BOUND: f64 = 24.0;

pub(crate) struct DecompositionProx {
    width: usize,
    height: usize,
    /// `λ_dc w_p (1, 1, λ_θ, λ_z)`, to be scaled by the step.
    base: [Vec<f64>; 4],
    /// Dual variable, kept between calls as a warm start.
    q: [Vec<f64>; 4],
}

fn apply_k(u: &[f64], v: &[f64], w: usize, h: usize) -> [Vec<f64>; 4] {
    let ux = forward_dx(u, w, h);
    let uy = forward_dy(u, w, h);
    let vx = forward_dx(v, w, h);
    let vy = forward_dy(v, w, h);
    let shear = uy.iter().zip(&vx).map(|(a, b)| a + b).collect();
    let rot = uy.iter().zip(&vx).map(|(a, b)| b - a).collect();
    [ux, vy, shear, rot]
}

fn apply_kt(q: &[Vec<f64>; 4], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let n = w * h;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let uy_coef: Vec<f64> = q[2].iter().zip(&q[3]).map(|(s, r)| s - r).collect();
    let vx_coef: Vec<f64> = q[2].iter().zip(&q[3]).map(|(s, r)| s + r).collect();
    forward_dx_adjoint(&q[0], w, h, &mut u);
    forward_dy_adjoint(&uy_coef, w, h, &mut u);
    forward_dx_adjoint(&vx_coef, w, h, &mut v);
    forward_dy_adjoint(&q[1], w, h, &mut v);
    (u, v)
}

impl DecompositionProx {
    pub(crate) fn new(width: usize, height: usize, edge_weight: &[f64], weights: &EnergyWeights) -> Self {
        let n = width * height;
        let scale = [1.0, 1.0, weights.lambda_theta, weights.lambda_z];
        let base = scale.map(|s| {
            edge_weight
                .iter()
                .map(|e| weights.lambda_dc * e * s)
                .collect::<Vec<f64>>()
        });
        DecompositionProx {
            width,
            height,
            base,
            q: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    /// Runs dual iterations until the duality gap drops below `gap_tol` or
    /// `max_iters` is reached; returns the primal point and the final gap.
    pub(crate) fn apply(&mut self, z: &FlowField, tau: f64, gap_tol: f64, max_iters: usize) -> (FlowField, f64) {
        let (w, h) = (self.width, self.height);
        let n = w * h;
        let sigma = 1.0 / K_NORM_SQ_BOUND;
        let bounds: [Vec<f64>; 4] =
            std::array::from_fn(|k| self.base[k].iter().map(|b| tau * b).collect());
        for (q, b) in self.q.iter_mut().zip(&bounds) {
            for (qi, bi) in q.iter_mut().zip(b) {
                *qi = qi.clamp(-bi, *bi);
            }
        }
        let primal = |q: &[Vec<f64>; 4]| {
            let (ku, kv) = apply_kt(q, w, h);
            let fu: Vec<f64> = z.u().iter().zip(&ku).map(|(a, b)| a - b).collect();
            let fv: Vec<f64> = z.v().iter().zip(&kv).map(|(a, b)| a - b).collect();
            (fu, fv)
        };
        // P(f) − D(q) with f = z − Kᵀq
        let gap = |kf: &[Vec<f64>; 4], q: &[Vec<f64>; 4]| {
            let mut g = 0.0;
            for k in 0..4 {
                for i in 0..n {
                    g += bounds[k][i] * kf[k][i].abs() - q[k][i] * kf[k][i];
                }
            }
            g
        };

        let mut y = self.q.clone();
        let mut t = 1.0f64;
        for it in 0..max_iters {
            let (fu, fv) = primal(&y);
            let kf = apply_k(&fu, &fv, w, h);
            if it % GAP_CHECK_EVERY == 0 {
                let (qu, qv) = primal(&self.q);
                let kq = apply_k(&qu, &qv, w, h);
                let g = gap(&kq, &self.q);
                if g <= gap_tol {
                    return (FlowField::new(w, h, qu, qv).expect("prox keeps the shape"), g);
                }
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            for k in 0..4 {
                for i in 0..n {
                    let b = bounds[k][i];
                    let q_new = (y[k][i] + sigma * kf[k][i]).clamp(-b, b);
                    y[k][i] = q_new + momentum * (q_new - self.q[k][i]);
                    self.q[k][i] = q_new;
                }
            }
            t = t_next;
        }
        let (fu, fv) = primal(&self.q);
        let kf = apply_k(&fu, &fv, w, h);
        let g = gap(&kf, &self.q);
        (FlowField::new(w, h, fu, fv).expect("prox keeps the shape"), g)
    }
}

const GAP_CHECK_EVERY: usize = 10;
