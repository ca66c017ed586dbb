//! Isotonic regression via pool-adjacent-violators on (confidence,
//! correctness), ties merged before pooling.

use serde::{Deserialize, Serialize};

use super::CalSample;
use crate::error::{Error, Result};

/// A monotone nondecreasing step function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsotonicModel {
    /// Block lower bounds on the confidence axis, ascending.
    pub starts: Vec<f64>,
    /// Fitted block values, nondecreasing.
    pub values: Vec<f64>,
}

/// Weighted PAVA over `(x, y, w)` points that are already sorted and
/// deduplicated on `x`. Returns the fitted value per input point.
pub fn pava(y: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), w.len());
    // Each stack block: (value sum * weight, weight, item count).
    let mut sums: Vec<f64> = Vec::with_capacity(y.len());
    let mut weights: Vec<f64> = Vec::with_capacity(y.len());
    let mut counts: Vec<usize> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        sums.push(yi * wi);
        weights.push(wi);
        counts.push(1);
        while sums.len() >= 2 {
            let m = sums.len();
            let mean_last = sums[m - 1] / weights[m - 1];
            let mean_prev = sums[m - 2] / weights[m - 2];
            if mean_prev <= mean_last {
                break;
            }
            sums[m - 2] += sums[m - 1];
            weights[m - 2] += weights[m - 1];
            counts[m - 2] += counts[m - 1];
            sums.pop();
            weights.pop();
            counts.pop();
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for ((s, w), c) in sums.iter().zip(&weights).zip(&counts) {
        let v = s / w;
        out.extend(std::iter::repeat_n(v, *c));
    }
    out
}

/// Least-squares monotone fit of correctness on confidence. Samples sharing
/// a confidence value are merged into one weighted point first.
pub fn fit_isotonic(cal: &[CalSample]) -> Result<IsotonicModel> {
    let pairs: Vec<(f64, f64)> = cal.iter().map(|s| (s.conf, f64::from(s.correct))).collect();
    isotonic_fit(&pairs)
}

/// Core fit on raw `(x, target)` pairs.
pub fn isotonic_fit(pairs: &[(f64, f64)]) -> Result<IsotonicModel> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // Merge exact ties on x.
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for (x, y) in sorted {
        if xs.last() == Some(&x) {
            let i = xs.len() - 1;
            let w_new = ws[i] + 1.0;
            ys[i] = (ys[i] * ws[i] + y) / w_new;
            ws[i] = w_new;
        } else {
            xs.push(x);
            ys.push(y);
            ws.push(1.0);
        }
    }
    let fitted = pava(&ys, &ws);
    // Collapse equal-valued neighbours into blocks.
    let mut starts = Vec::new();
    let mut values = Vec::new();
    for (i, &v) in fitted.iter().enumerate() {
        if values.last() != Some(&v) {
            starts.push(xs[i]);
            values.push(v);
        }
    }
    Ok(IsotonicModel { starts, values })
}

impl IsotonicModel {
    /// Value of the step function at `x` (clamped to the end blocks).
    pub fn predict(&self, x: f64) -> f64 {
        let idx = self.starts.partition_point(|&s| s <= x);
        if idx == 0 {
            self.values[0]
        } else {
            self.values[idx - 1]
        }
    }
}
