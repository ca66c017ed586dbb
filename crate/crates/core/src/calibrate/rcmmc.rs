//! Margin/entropy cell-binned temperatures with a monotone-confidence
//! constraint along the margin axis.
//!
//! Calibration samples are quantile-binned on the (top1-top2 margin,
//! predictive entropy) plane; each cell gets its own NLL-fit temperature.
//! Within every entropy row, the per-cell mean calibrated confidence is then
//! made nondecreasing in the margin bin by a weighted isotonic projection,
//! realized by re-solving the offending cells' log-temperatures against the
//! projected targets. Application is a cell lookup (out-of-range inputs
//! clamp to edge cells), so the transform stays in the temperature family
//! and preserves the argmax.

use serde::{Deserialize, Serialize};

use super::isotonic::pava;
use super::temperature::fit_temperature;
use super::{golden_section_min, nll_at_temperature, CalSample};
use crate::error::{Error, Result};
use crate::stats::{log_sum_exp, quantile};

#[derive(Debug, Clone, Copy)]
pub struct RcmmcOptions {
    pub n_margin: usize,
    pub n_ent: usize,
}

impl Default for RcmmcOptions {
    fn default() -> Self {
        Self {
            n_margin: 8,
            n_ent: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RcmmcModel {
    pub n_margin: usize,
    pub n_ent: usize,
    /// Quantile cut points (len n_margin - 1 / n_ent - 1).
    pub margin_cuts: Vec<f64>,
    pub entropy_cuts: Vec<f64>,
    /// Per-cell log temperature, row-major over entropy rows.
    pub log_taus: Vec<f64>,
}

/// Top1-top2 probability margin and normalized predictive entropy.
pub fn margin_entropy(probs: &[f64]) -> (f64, f64) {
    let mut top1 = f64::NEG_INFINITY;
    let mut top2 = f64::NEG_INFINITY;
    for &p in probs {
        if p > top1 {
            top2 = top1;
            top1 = p;
        } else if p > top2 {
            top2 = p;
        }
    }
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    (top1 - top2, h / (probs.len() as f64).ln())
}

fn cut_index(cuts: &[f64], value: f64) -> usize {
    // Values exactly on a cut go to the lower bin.
    cuts.partition_point(|&c| c < value)
}

fn quantile_cuts(values: &[f64], bins: usize) -> Vec<f64> {
    (1..bins)
        .map(|j| quantile(values, j as f64 / bins as f64))
        .collect()
}

/// Mean calibrated top-class confidence of a cell at temperature `tau`.
fn cell_mean_conf(cell: &[&CalSample], tau: f64) -> f64 {
    let mut total = 0.0;
    for s in cell {
        let scaled: Vec<f64> = s.logits.iter().map(|z| z / tau).collect();
        total += (scaled[s.pred] - log_sum_exp(&scaled)).exp();
    }
    total / cell.len() as f64
}

/// Solve for the temperature whose cell mean confidence equals `target`
/// (mean confidence is strictly decreasing in tau). Clamps to the bracket
/// endpoints when the target is outside the achievable range.
fn solve_cell_temperature(cell: &[&CalSample], target: f64) -> f64 {
    let (mut lo, mut hi) = (-8.0f64, 8.0f64);
    if cell_mean_conf(cell, lo.exp()) <= target {
        return lo;
    }
    if cell_mean_conf(cell, hi.exp()) >= target {
        return hi;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cell_mean_conf(cell, mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn fit_rcmmc(cal: &[CalSample], options: &RcmmcOptions) -> Result<RcmmcModel> {
    let (nm, ne) = (options.n_margin, options.n_ent);
    if nm == 0 || ne == 0 {
        return Err(Error::invalid("grid dimensions must be >= 1"));
    }
    if cal.len() < nm * ne {
        return Err(Error::invalid(format!(
            "need at least {} samples for an {}x{} grid",
            nm * ne,
            nm,
            ne
        )));
    }
    // A 1x1 grid is plain temperature scaling, same optimizer and all.
    if nm == 1 && ne == 1 {
        let ts = fit_temperature(cal)?;
        return Ok(RcmmcModel {
            n_margin: 1,
            n_ent: 1,
            margin_cuts: vec![],
            entropy_cuts: vec![],
            log_taus: vec![ts.tau.ln()],
        });
    }

    let feats: Vec<(f64, f64)> = cal.iter().map(|s| margin_entropy(&s.probs)).collect();
    let margins: Vec<f64> = feats.iter().map(|f| f.0).collect();
    let entropies: Vec<f64> = feats.iter().map(|f| f.1).collect();
    let margin_cuts = quantile_cuts(&margins, nm);
    let entropy_cuts = quantile_cuts(&entropies, ne);

    let mut cells: Vec<Vec<&CalSample>> = vec![Vec::new(); nm * ne];
    for (s, &(m, e)) in cal.iter().zip(&feats) {
        let mi = cut_index(&margin_cuts, m);
        let ei = cut_index(&entropy_cuts, e);
        cells[ei * nm + mi].push(s);
    }

    // Per-cell NLL temperature on the same bracket as plain TS.
    let mut log_taus = vec![f64::NAN; nm * ne];
    for (idx, cell) in cells.iter().enumerate() {
        if cell.is_empty() {
            continue;
        }
        let owned: Vec<CalSample> = cell.iter().map(|&s| s.clone()).collect();
        let (lt, _) =
            golden_section_min(|lt| nll_at_temperature(&owned, lt.exp()), -4.0, 4.0, 1e-6);
        log_taus[idx] = lt;
    }

    // Empty cells adopt the temperature of the nearest fitted cell walking
    // toward the median cell of the grid.
    let center = ((nm - 1) / 2, (ne - 1) / 2);
    for ei in 0..ne {
        for mi in 0..nm {
            if !log_taus[ei * nm + mi].is_nan() {
                continue;
            }
            let (mut ci, mut cj) = (mi, ei);
            loop {
                let dm = center.0 as isize - ci as isize;
                let de = center.1 as isize - cj as isize;
                if dm == 0 && de == 0 {
                    break;
                }
                if dm.abs() >= de.abs() {
                    ci = (ci as isize + dm.signum()) as usize;
                } else {
                    cj = (cj as isize + de.signum()) as usize;
                }
                if !log_taus[cj * nm + ci].is_nan() {
                    break;
                }
            }
            if log_taus[cj * nm + ci].is_nan() {
                // Median cell itself empty: fall back to the global fit.
                let ts = fit_temperature(cal)?;
                log_taus[ei * nm + mi] = ts.tau.ln();
            } else {
                log_taus[ei * nm + mi] = log_taus[cj * nm + ci];
            }
        }
    }

    // Monotone projection within each entropy row: weighted PAVA on the
    // per-cell mean calibrated confidence, then re-solve the temperatures of
    // cells the projection moved.
    for ei in 0..ne {
        let row: Vec<usize> = (0..nm).map(|mi| ei * nm + mi).collect();
        let occupied: Vec<usize> = row
            .iter()
            .cloned()
            .filter(|&i| !cells[i].is_empty())
            .collect();
        if occupied.len() < 2 {
            continue;
        }
        let confs: Vec<f64> = occupied
            .iter()
            .map(|&i| cell_mean_conf(&cells[i], log_taus[i].exp()))
            .collect();
        let weights: Vec<f64> = occupied.iter().map(|&i| cells[i].len() as f64).collect();
        let projected = pava(&confs, &weights);
        for ((&idx, &before), &after) in occupied.iter().zip(&confs).zip(&projected) {
            if (after - before).abs() > 1e-12 {
                log_taus[idx] = solve_cell_temperature(&cells[idx], after);
            }
        }
    }

    Ok(RcmmcModel {
        n_margin: nm,
        n_ent: ne,
        margin_cuts,
        entropy_cuts,
        log_taus,
    })
}

impl RcmmcModel {
    /// Cell lookup for one sample's raw softmax probabilities.
    pub fn temperature_for(&self, probs: &[f64]) -> f64 {
        let (m, e) = margin_entropy(probs);
        let mi = cut_index(&self.margin_cuts, m).min(self.n_margin - 1);
        let ei = cut_index(&self.entropy_cuts, e).min(self.n_ent - 1);
        self.log_taus[ei * self.n_margin + mi].exp()
    }
}
