//! Routing-entropy profiles and scalar feature candidates.
//!
//! A routing trace contributes, per retained sub-layer, a `T x N` weight
//! matrix over prior states. Its normalized Shannon entropy
//! `H = (1 / (N ln T)) * sum_n sum_t -a_{t,n} ln a_{t,n}` lies in [0, 1]:
//! 0 for fully concentrated routing, 1 for uniform. A profile
//! `(H_1, ..., H_L)` is then summarised into one scalar per sample by a
//! [`FeatureKind`].
//!
//! Convention: the depth spread (`DepthVariance`) uses the population
//! (divide-by-L) standard deviation, so it is 0 for a single-layer profile.
//! Report headers echo this convention.

use serde::{Deserialize, Serialize};

use crate::data::{softmax_confidence, Dataset, PredictionRecord};
use crate::error::{Error, Result};
use crate::stats::{mean, pop_std};

/// Per-layer normalized routing entropies for one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingProfile {
    pub h: Vec<f64>,
}

/// The scalar feature candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Top-class softmax confidence (non-routing control).
    ConfidenceOnly,
    /// Predictive entropy of the softmax, normalized by ln K (non-routing
    /// control).
    PredEntropy,
    /// Depth mean of the entropy profile.
    AggEntropy,
    /// 1 - depth mean.
    Concentration,
    /// Entropy of the deepest retained sub-layer.
    LastLayerEntropy,
    /// Population std of the profile across depth.
    DepthVariance,
    /// Depth mean times confidence.
    EntropyTimesConfidence,
    /// Label-free min-max rescaling of an inner feature, fitted on the full
    /// routing cache before any split.
    MinMaxRescaled(Box<FeatureKind>),
}

impl FeatureKind {
    /// Does evaluation require a routing profile?
    pub fn needs_routing(&self) -> bool {
        match self {
            FeatureKind::ConfidenceOnly | FeatureKind::PredEntropy => false,
            FeatureKind::MinMaxRescaled(inner) => inner.needs_routing(),
            _ => true,
        }
    }

    /// Stable name used in CLI flags and report headers.
    pub fn name(&self) -> String {
        match self {
            FeatureKind::ConfidenceOnly => "conf".into(),
            FeatureKind::PredEntropy => "pred_entropy".into(),
            FeatureKind::AggEntropy => "r_agg".into(),
            FeatureKind::Concentration => "concentration".into(),
            FeatureKind::LastLayerEntropy => "h_last".into(),
            FeatureKind::DepthVariance => "r_std".into(),
            FeatureKind::EntropyTimesConfidence => "ent_x_conf".into(),
            FeatureKind::MinMaxRescaled(inner) => format!("minmax({})", inner.name()),
        }
    }

    /// Parse a CLI name. `minmax(<name>)` wraps the inner feature.
    pub fn parse(name: &str) -> Result<FeatureKind> {
        let name = name.trim();
        if let Some(rest) = name
            .strip_prefix("minmax(")
            .and_then(|s| s.strip_suffix(')'))
        {
            let inner = FeatureKind::parse(rest)?;
            if matches!(inner, FeatureKind::MinMaxRescaled(_)) {
                return Err(Error::invalid("nested minmax rescaling"));
            }
            return Ok(FeatureKind::MinMaxRescaled(Box::new(inner)));
        }
        match name {
            "conf" => Ok(FeatureKind::ConfidenceOnly),
            "pred_entropy" => Ok(FeatureKind::PredEntropy),
            "r_agg" => Ok(FeatureKind::AggEntropy),
            "concentration" => Ok(FeatureKind::Concentration),
            "h_last" => Ok(FeatureKind::LastLayerEntropy),
            "r_std" => Ok(FeatureKind::DepthVariance),
            "ent_x_conf" => Ok(FeatureKind::EntropyTimesConfidence),
            other => Err(Error::invalid(format!("unknown feature {other:?}"))),
        }
    }
}

/// Normalized Shannon entropy of one `T x N` routing-weight matrix
/// (natural log, `log T` normalizer, `0 ln 0 := 0`).
///
/// `T == 1` is rejected: a single prior state routes uniformly by
/// construction and carries no information.
pub fn layer_entropy(alpha: &[Vec<f64>]) -> Result<f64> {
    let t = alpha.len();
    if t < 2 {
        return Err(Error::invalid("sub-layer with T < 2 is excluded"));
    }
    let n = alpha[0].len();
    if n == 0 || alpha.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("ragged routing-weight matrix"));
    }
    let mut total = 0.0;
    for row in alpha {
        for &w in row {
            if w > 0.0 {
                total -= w * w.ln();
            }
        }
    }
    let h = total / (n as f64 * (t as f64).ln());
    if !(-1e-9..=1.0 + 1e-9).contains(&h) {
        return Err(Error::numerical(format!(
            "layer entropy {h} outside [0,1] beyond tolerance"
        )));
    }
    Ok(h.clamp(0.0, 1.0))
}

/// Evaluate a non-rescaled feature on one record.
pub fn scalar_feature(record: &PredictionRecord, kind: &FeatureKind) -> Result<f64> {
    let profile = || -> Result<&Vec<f64>> {
        record
            .entropy_profile
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("record {:?}: no routing profile", record.id)))
    };
    match kind {
        FeatureKind::ConfidenceOnly => {
            let (_, _, conf) = softmax_confidence(&record.logits)?;
            Ok(conf)
        }
        FeatureKind::PredEntropy => {
            let (probs, _, _) = softmax_confidence(&record.logits)?;
            let mut h = 0.0;
            for &p in &probs {
                if p > 0.0 {
                    h -= p * p.ln();
                }
            }
            Ok((h / (probs.len() as f64).ln()).clamp(0.0, 1.0))
        }
        FeatureKind::AggEntropy => Ok(mean(profile()?)),
        FeatureKind::Concentration => Ok(1.0 - mean(profile()?)),
        FeatureKind::LastLayerEntropy => Ok(*profile()?.last().unwrap()),
        FeatureKind::DepthVariance => Ok(pop_std(profile()?)),
        FeatureKind::EntropyTimesConfidence => {
            let (_, _, conf) = softmax_confidence(&record.logits)?;
            Ok(mean(profile()?) * conf)
        }
        FeatureKind::MinMaxRescaled(_) => Err(Error::invalid(
            "min-max rescaling needs the full dataset; use feature_column",
        )),
    }
}

/// Min-max rescale to [0, 1]; a constant vector maps to all 0.5 so kernel
/// inputs stay finite.
pub fn minmax_rescale(values: &[f64]) -> Vec<f64> {
    assert!(!values.is_empty());
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Feature values for every record, in dataset order. `MinMaxRescaled` fits
/// its transform on these values (the full routing cache, labels unused), so
/// call this before splitting when rescaling is in play.
pub fn feature_column(dataset: &Dataset, kind: &FeatureKind) -> Result<Vec<f64>> {
    match kind {
        FeatureKind::MinMaxRescaled(inner) => {
            let raw = feature_column(dataset, inner)?;
            Ok(minmax_rescale(&raw))
        }
        _ => dataset
            .records()
            .iter()
            .map(|r| scalar_feature(r, kind))
            .collect(),
    }
}
