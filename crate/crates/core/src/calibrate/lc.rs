//! Logit-norm temperature baseline: L2-normalize the logits per sample, then
//! pick the single multiplier that minimizes equal-width binned ECE on the
//! calibration split.

use serde::{Deserialize, Serialize};

use super::{scale, CalSample};
use crate::data::softmax_confidence;
use crate::error::{Error, Result};
use crate::metrics::{ece, BinningSpec};

const GRID_POINTS: usize = 201;
const LOG10_LO: f64 = -2.0;
const LOG10_HI: f64 = 2.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogitNormModel {
    pub tau: f64,
    pub cal_ece: f64,
}

pub fn normalize(logits: &[f64]) -> Result<Vec<f64>> {
    let norm = logits.iter().map(|z| z * z).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::invalid("zero logit vector cannot be normalized"));
    }
    Ok(logits.iter().map(|z| z / norm).collect())
}

/// Deterministic grid search over 201 log-spaced multipliers in [1e-2, 1e2];
/// ties break toward the smallest multiplier.
pub fn fit_lc(cal: &[CalSample], bin_count: usize) -> Result<LogitNormModel> {
    if cal.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    let normalized: Vec<(Vec<f64>, bool, usize)> = cal
        .iter()
        .map(|s| Ok((normalize(&s.logits)?, s.correct, s.label)))
        .collect::<Result<_>>()?;
    let spec = BinningSpec::equal_width(bin_count);
    let mut best: Option<(f64, f64)> = None; // (ece, tau)
    for i in 0..GRID_POINTS {
        let tau =
            10f64.powf(LOG10_LO + (LOG10_HI - LOG10_LO) * i as f64 / (GRID_POINTS - 1) as f64);
        let samples: Vec<(f64, bool)> = normalized
            .iter()
            .map(|(z, _, label)| {
                let (p, pred, conf) = softmax_confidence(&scale(z, tau)).unwrap();
                debug_assert_eq!(p.len(), z.len());
                (conf, pred == *label)
            })
            .collect();
        let e = ece(&samples, &spec)?;
        if best.is_none_or(|(be, _)| e < be) {
            best = Some((e, tau));
        }
    }
    let (cal_ece, tau) = best.unwrap();
    Ok(LogitNormModel { tau, cal_ece })
}
