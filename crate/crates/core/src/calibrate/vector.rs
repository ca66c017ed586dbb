//! Vector scaling: per-class slope and bias on the logits, fit by full-batch
//! gradient descent with backtracking line search.

use serde::{Deserialize, Serialize};

use super::CalSample;
use crate::data::softmax_confidence;
use crate::error::{Error, Result};

const MAX_ITERS: usize = 500;
const GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorScalingModel {
    /// Diagonal scale (true vector scaling, not a full matrix).
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
}

impl VectorScalingModel {
    pub fn transform(&self, logits: &[f64]) -> Vec<f64> {
        logits
            .iter()
            .zip(&self.w)
            .zip(&self.b)
            .map(|((z, w), b)| w * z + b)
            .collect()
    }
}

fn nll_and_grad(cal: &[CalSample], w: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let k = w.len();
    let n = cal.len() as f64;
    let mut nll = 0.0;
    let mut grad_w = vec![0.0; k];
    let mut grad_b = vec![0.0; k];
    for s in cal {
        let z: Vec<f64> = (0..k).map(|j| w[j] * s.logits[j] + b[j]).collect();
        let lse = crate::stats::log_sum_exp(&z);
        nll += lse - z[s.label];
        for j in 0..k {
            let p = (z[j] - lse).exp();
            let residual = p - f64::from(j == s.label);
            grad_w[j] += residual * s.logits[j] / n;
            grad_b[j] += residual / n;
        }
    }
    (nll / n, grad_w, grad_b)
}

/// Minimize the calibration NLL of `softmax(w .* z + b)` from the identity
/// initialization. Runs until the gradient norm drops below 1e-8 or 500
/// iterations, whichever first.
pub fn fit_vector_scaling(cal: &[CalSample]) -> Result<VectorScalingModel> {
    if cal.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    let k = cal[0].logits.len();
    if cal.len() < k {
        return Err(Error::invalid(format!(
            "vector scaling needs at least K = {k} calibration samples"
        )));
    }
    let mut w = vec![1.0; k];
    let mut b = vec![0.0; k];
    let (mut loss, mut gw, mut gb) = nll_and_grad(cal, &w, &b);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut grad_norm = grad_norm_of(&gw, &gb);
    while iterations < MAX_ITERS && grad_norm >= GRAD_TOL {
        // Backtracking on the Armijo condition; the step carries over
        // between iterations so well-behaved regions stay fast.
        let mut accepted = false;
        for _ in 0..40 {
            let w_next: Vec<f64> = w.iter().zip(&gw).map(|(x, g)| x - step * g).collect();
            let b_next: Vec<f64> = b.iter().zip(&gb).map(|(x, g)| x - step * g).collect();
            let (loss_next, gw_next, gb_next) = nll_and_grad(cal, &w_next, &b_next);
            if loss_next <= loss - 1e-4 * step * grad_norm * grad_norm {
                w = w_next;
                b = b_next;
                loss = loss_next;
                gw = gw_next;
                gb = gb_next;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(1e3);
        grad_norm = grad_norm_of(&gw, &gb);
        iterations += 1;
    }
    Ok(VectorScalingModel {
        w,
        b,
        iterations,
        final_grad_norm: grad_norm,
    })
}

fn grad_norm_of(gw: &[f64], gb: &[f64]) -> f64 {
    gw.iter().chain(gb).map(|g| g * g).sum::<f64>().sqrt()
}

#[allow(dead_code)]
pub(crate) fn mean_nll(cal: &[CalSample], model: &VectorScalingModel) -> f64 {
    let mut total = 0.0;
    for s in cal {
        let z = model.transform(&s.logits);
        let (p, _, _) = softmax_confidence(&z).unwrap();
        total -= p[s.label].max(1e-12).ln();
    }
    total / cal.len() as f64
}
