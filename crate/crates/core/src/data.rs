//! Prediction records, dataset container, and deterministic splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features;
use crate::rng::{RngStream, StreamDomain};
use crate::stats::argmax;

/// Tolerance for the per-token routing-weight simplex check.
pub const ALPHA_COLUMN_TOL: f64 = 1e-6;

/// One sample: logits over `K` classes, the true label, and (optionally)
/// either raw per-sub-layer routing weights `alpha` or a precomputed
/// per-layer routing-entropy profile.
///
/// `alpha[l]` is a `T_l x N` matrix (rows index the mixture over prior
/// states, columns index tokens); each column must sum to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub logits: Vec<f64>,
    pub label: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_profile: Option<Vec<f64>>,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, logits: Vec<f64>, label: usize) -> Self {
        Self {
            id: id.into(),
            logits,
            label,
            alpha: None,
            entropy_profile: None,
        }
    }

    pub fn class_count(&self) -> usize {
        self.logits.len()
    }

    /// Check every structural invariant of a single record.
    pub fn validate(&self) -> Result<()> {
        if self.logits.len() < 2 {
            return Err(Error::invalid(format!(
                "record {:?}: needs at least 2 classes, got {}",
                self.id,
                self.logits.len()
            )));
        }
        if self.logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid(format!(
                "record {:?}: non-finite logit",
                self.id
            )));
        }
        if self.label >= self.logits.len() {
            return Err(Error::invalid(format!(
                "record {:?}: label {} out of range for {} classes",
                self.id,
                self.label,
                self.logits.len()
            )));
        }
        if let Some(alpha) = &self.alpha {
            for (l, mat) in alpha.iter().enumerate() {
                let t = mat.len();
                if t < 2 {
                    return Err(Error::invalid(format!(
                        "record {:?}: sub-layer {} has T={}, need T >= 2",
                        self.id, l, t
                    )));
                }
                let n = mat[0].len();
                if n == 0 || mat.iter().any(|row| row.len() != n) {
                    return Err(Error::invalid(format!(
                        "record {:?}: sub-layer {} is ragged across tokens",
                        self.id, l
                    )));
                }
                for row in mat {
                    for &w in row {
                        if !(0.0..=1.0).contains(&w) || !w.is_finite() {
                            return Err(Error::invalid(format!(
                                "record {:?}: sub-layer {} weight {} outside [0,1]",
                                self.id, l, w
                            )));
                        }
                    }
                }
                for col in 0..n {
                    let s: f64 = mat.iter().map(|row| row[col]).sum();
                    if (s - 1.0).abs() > ALPHA_COLUMN_TOL {
                        return Err(Error::invalid(format!(
                            "record {:?}: sub-layer {} token {} weights sum to {}, not 1",
                            self.id, l, col, s
                        )));
                    }
                }
            }
        }
        if let Some(profile) = &self.entropy_profile {
            if profile.is_empty() {
                return Err(Error::invalid(format!(
                    "record {:?}: empty entropy profile",
                    self.id
                )));
            }
            for &h in profile {
                if !(0.0..=1.0).contains(&h) || !h.is_finite() {
                    return Err(Error::invalid(format!(
                        "record {:?}: entropy {} outside [0,1]",
                        self.id, h
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Softmax probabilities, predicted class (lowest index on ties), and
/// top-class confidence for one logit vector.
pub fn softmax_confidence(logits: &[f64]) -> Result<(Vec<f64>, usize, f64)> {
    if logits.len() < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("non-finite logits"));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let pred = argmax(&probs);
    let confidence = probs[pred];
    Ok((probs, pred, confidence))
}

/// An ordered collection of records sharing class count `K` and routing
/// depth `L` (`L == 0` when no routing data is attached).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<PredictionRecord>,
    class_count: usize,
    layer_count: usize,
}

impl Dataset {
    /// Validate records and build a dataset. Records carrying raw `alpha`
    /// get their entropy profile (re)computed from it; `alpha` is the
    /// source of truth when both are present.
    pub fn new(mut records: Vec<PredictionRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("empty dataset"));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.id.clone()) {
                return Err(Error::invalid(format!("duplicate record id {:?}", r.id)));
            }
        }
        let class_count = records[0].class_count();
        if records.iter().any(|r| r.class_count() != class_count) {
            return Err(Error::invalid("records disagree on class count"));
        }
        for r in &mut records {
            if let Some(alpha) = &r.alpha {
                let profile = alpha
                    .iter()
                    .map(|mat| features::layer_entropy(mat))
                    .collect::<Result<Vec<f64>>>()?;
                r.entropy_profile = Some(profile);
            }
        }
        let layer_count = match &records[0].entropy_profile {
            Some(p) => p.len(),
            None => 0,
        };
        for r in &records {
            let l = r.entropy_profile.as_ref().map_or(0, |p| p.len());
            if l != layer_count {
                return Err(Error::invalid(format!(
                    "record {:?}: routing depth {} disagrees with dataset depth {}",
                    r.id, l, layer_count
                )));
            }
        }
        Ok(Self {
            records,
            class_count,
            layer_count,
        })
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Routing depth L; 0 when the dataset carries no routing data.
    pub fn layer_count(&self) -> usize {
        self.layer_count
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_routing(&self) -> bool {
        self.layer_count > 0
    }

    /// Sub-dataset from record indices (used by splits and resampling).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            class_count: self.class_count,
            layer_count: self.layer_count,
        }
    }
}

/// Deterministic calibration/test split specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub cal_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            cal_fraction: 0.5,
        }
    }
}

/// The index partition behind [`split`]: Fisher-Yates shuffle of `0..n`
/// seeded by `spec.seed`, then contiguous blocks, with the calibration size
/// rounded half-up from `cal_fraction * n`.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.cal_fraction > 0.0 && spec.cal_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "cal_fraction {} outside (0,1)",
            spec.cal_fraction
        )));
    }
    if n == 0 {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    let n_cal = (spec.cal_fraction * n as f64).round() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    RngStream::derive(spec.seed, StreamDomain::Split, 0).shuffle(&mut indices);
    let test = indices.split_off(n_cal);
    Ok((indices, test))
}

/// Split into (cal, test). The same spec always yields the identical
/// partition.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (cal_idx, test_idx) = split_indices(dataset.len(), spec)?;
    Ok((dataset.subset(&cal_idx), dataset.subset(&test_idx)))
}
