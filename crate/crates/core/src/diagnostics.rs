//! Matched-confidence gap diagnostics.
//!
//! Samples are stratified into tertiles of a routing feature; within each
//! tertile, accuracy is tabulated over equal-width confidence bins. Bins
//! supported by both the low and high tertile ("shared bins") yield the max
//! absolute accuracy gap and a support-weighted mean gap, with percentile
//! bootstrap CIs and a within-confidence-bin permutation test against the
//! conditional null (routing carries no information once the confidence bin
//! is fixed).
//!
//! Resampling keeps the original tertile cut points fixed and re-applies
//! them per replicate. Replicates with no shared bins are skipped and
//! counted. Percentile-bootstrap CIs of absolute-gap statistics need not
//! contain the original point estimate; that is expected behavior, not a
//! bug.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{softmax_confidence, Dataset};
use crate::error::{Error, Result};
use crate::features::{feature_column, FeatureKind};
use crate::metrics::{bin_index, TertileSplit};
use crate::rng::{RngStream, StreamDomain};
use crate::stats::{quantile, quantile_sorted};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub feature: FeatureKind,
    pub bin_count: usize,
    pub min_support: usize,
    pub bootstrap: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            feature: FeatureKind::AggEntropy,
            bin_count: 15,
            min_support: 5,
            bootstrap: 5000,
            permutations: 5000,
            seed: 42,
        }
    }
}

/// Accuracy table of one tertile over the confidence bins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinStat {
    pub n: usize,
    pub acc: f64,
}

/// Per-tertile accuracy-vs-confidence curves plus shared-bin bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TertileCurves {
    pub q_low: f64,
    pub q_high: f64,
    pub bin_count: usize,
    pub min_support: usize,
    pub low: Vec<BinStat>,
    pub mid: Vec<BinStat>,
    pub high: Vec<BinStat>,
    /// Bins valid (n >= min_support) in both the low and high tertile.
    pub shared: Vec<usize>,
}

fn curve_for(samples: &[(f64, bool)], indices: &[usize], bin_count: usize) -> Vec<BinStat> {
    let mut n = vec![0usize; bin_count];
    let mut hits = vec![0usize; bin_count];
    for &i in indices {
        let (conf, correct) = samples[i];
        let b = bin_index(conf, bin_count);
        n[b] += 1;
        hits[b] += correct as usize;
    }
    (0..bin_count)
        .map(|b| BinStat {
            n: n[b],
            acc: if n[b] > 0 {
                hits[b] as f64 / n[b] as f64
            } else {
                0.0
            },
        })
        .collect()
}

/// Curves with tertile cuts derived from this sample. Errors when the cuts
/// collapse (constant feature).
pub fn matched_confidence_curves(
    samples: &[(f64, bool)],
    rho: &[f64],
    bin_count: usize,
    min_support: usize,
) -> Result<TertileCurves> {
    let split = TertileSplit::from_feature(rho)?;
    Ok(curves_with_split(samples, &split, bin_count, min_support))
}

/// Curves under externally fixed cut points (resampling path).
pub fn curves_with_cuts(
    samples: &[(f64, bool)],
    rho: &[f64],
    q_low: f64,
    q_high: f64,
    bin_count: usize,
    min_support: usize,
) -> TertileCurves {
    let split = TertileSplit::with_cuts(rho, q_low, q_high);
    curves_with_split(samples, &split, bin_count, min_support)
}

fn curves_with_split(
    samples: &[(f64, bool)],
    split: &TertileSplit,
    bin_count: usize,
    min_support: usize,
) -> TertileCurves {
    let low = curve_for(samples, &split.low, bin_count);
    let mid = curve_for(samples, &split.mid, bin_count);
    let high = curve_for(samples, &split.high, bin_count);
    let shared = (0..bin_count)
        .filter(|&b| low[b].n >= min_support && high[b].n >= min_support)
        .collect();
    TertileCurves {
        q_low: split.q_low,
        q_high: split.q_high,
        bin_count,
        min_support,
        low,
        mid,
        high,
        shared,
    }
}

/// Largest absolute low-vs-high accuracy gap over shared bins; `None` when
/// no bin is shared.
pub fn max_gap(curves: &TertileCurves) -> Option<f64> {
    curves
        .shared
        .iter()
        .map(|&b| (curves.low[b].acc - curves.high[b].acc).abs())
        .fold(None, |acc, g| Some(acc.map_or(g, |a: f64| a.max(g))))
}

/// Mean gap over shared bins weighted by `min(n_low, n_high)` per bin.
pub fn weighted_gap(curves: &TertileCurves) -> Option<f64> {
    if curves.shared.is_empty() {
        return None;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &b in &curves.shared {
        let w = curves.low[b].n.min(curves.high[b].n) as f64;
        num += w * (curves.low[b].acc - curves.high[b].acc).abs();
        den += w;
    }
    Some(num / den)
}

/// min / 25th percentile / median of per-shared-bin support
/// `min(n_low, n_high)`.
pub fn support_summary(curves: &TertileCurves) -> Option<(u64, f64, f64)> {
    if curves.shared.is_empty() {
        return None;
    }
    let supports: Vec<f64> = curves
        .shared
        .iter()
        .map(|&b| curves.low[b].n.min(curves.high[b].n) as f64)
        .collect();
    let min = supports.iter().cloned().fold(f64::INFINITY, f64::min) as u64;
    Some((min, quantile(&supports, 0.25), quantile(&supports, 0.5)))
}

/// Which statistic the permutation test targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapStatistic {
    MaxGap,
    WeightedGap,
}

impl GapStatistic {
    fn of(&self, curves: &TertileCurves) -> Option<f64> {
        match self {
            GapStatistic::MaxGap => max_gap(curves),
            GapStatistic::WeightedGap => weighted_gap(curves),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub max_gap_ci: (f64, f64),
    pub wt_gap_ci: (f64, f64),
    pub replicates: usize,
    pub skipped: usize,
    /// More than half of the replicates had no shared bins.
    pub unreliable: bool,
}

/// Percentile bootstrap over records, with tertile cuts held fixed at the
/// original sample's values. Replicate `i` draws from stream `i`, so the
/// result is independent of thread count.
pub fn bootstrap_ci(
    samples: &[(f64, bool)],
    rho: &[f64],
    cuts: (f64, f64),
    config: &DiagnosticsConfig,
) -> Result<BootstrapResult> {
    if config.bootstrap < 100 {
        return Err(Error::invalid("bootstrap replicate count must be >= 100"));
    }
    let n = samples.len();
    let draws: Vec<Option<(f64, f64)>> = (0..config.bootstrap as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = RngStream::derive(config.seed, StreamDomain::Bootstrap, rep);
            let mut s = Vec::with_capacity(n);
            let mut r = Vec::with_capacity(n);
            for _ in 0..n {
                let idx = rng.next_index(n);
                s.push(samples[idx]);
                r.push(rho[idx]);
            }
            let curves =
                curves_with_cuts(&s, &r, cuts.0, cuts.1, config.bin_count, config.min_support);
            Some((max_gap(&curves)?, weighted_gap(&curves)?))
        })
        .collect();
    let mut max_draws = Vec::with_capacity(draws.len());
    let mut wt_draws = Vec::with_capacity(draws.len());
    let mut skipped = 0usize;
    for d in draws {
        match d {
            Some((m, w)) => {
                max_draws.push(m);
                wt_draws.push(w);
            }
            None => skipped += 1,
        }
    }
    if max_draws.is_empty() {
        return Err(Error::degenerate(
            "every bootstrap replicate lacked shared bins",
        ));
    }
    max_draws.sort_by(f64::total_cmp);
    wt_draws.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        max_gap_ci: (
            quantile_sorted(&max_draws, 0.025),
            quantile_sorted(&max_draws, 0.975),
        ),
        wt_gap_ci: (
            quantile_sorted(&wt_draws, 0.025),
            quantile_sorted(&wt_draws, 0.975),
        ),
        replicates: config.bootstrap,
        skipped,
        unreliable: skipped * 2 > config.bootstrap,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermutationResult {
    pub p: f64,
    pub null_q975: f64,
    pub permutations: usize,
    pub skipped: usize,
    #[serde(skip)]
    pub null: Vec<f64>,
}

/// Within-confidence-bin permutation test: independently inside each bin,
/// the routing feature is shuffled across that bin's samples; tertile
/// membership is recomputed from the permuted feature under the original
/// cuts, and the statistic recomputed. The p-value uses the add-one rule
/// `(1 + #{null >= observed}) / (1 + P)`, so it is never zero.
pub fn permutation_test(
    samples: &[(f64, bool)],
    rho: &[f64],
    cuts: (f64, f64),
    statistic: GapStatistic,
    observed: f64,
    config: &DiagnosticsConfig,
) -> Result<PermutationResult> {
    if config.permutations < 100 {
        return Err(Error::invalid("permutation count must be >= 100"));
    }
    // Confidence-bin membership is permutation-invariant; compute once.
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); config.bin_count];
    for (i, &(conf, _)) in samples.iter().enumerate() {
        bins[bin_index(conf, config.bin_count)].push(i);
    }
    let draws: Vec<Option<f64>> = (0..config.permutations as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = RngStream::derive(config.seed, StreamDomain::Permutation, rep);
            let mut permuted = rho.to_vec();
            for members in &bins {
                if members.len() < 2 {
                    continue;
                }
                let mut values: Vec<f64> = members.iter().map(|&i| rho[i]).collect();
                rng.shuffle(&mut values);
                for (&i, &v) in members.iter().zip(&values) {
                    permuted[i] = v;
                }
            }
            let curves = curves_with_cuts(
                samples,
                &permuted,
                cuts.0,
                cuts.1,
                config.bin_count,
                config.min_support,
            );
            statistic.of(&curves)
        })
        .collect();
    let mut null: Vec<f64> = Vec::with_capacity(draws.len());
    let mut skipped = 0usize;
    for d in draws {
        match d {
            Some(v) => null.push(v),
            None => skipped += 1,
        }
    }
    if null.is_empty() {
        return Err(Error::degenerate("every permutation lacked shared bins"));
    }
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    let p = (1 + exceed) as f64 / (1 + null.len()) as f64;
    let mut sorted = null.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(PermutationResult {
        p,
        null_q975: quantile_sorted(&sorted, 0.975),
        permutations: config.permutations,
        skipped,
        null,
    })
}

/// One diagnostic run's summary (the row emitted by the `diagnose` command).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub feature: String,
    pub n: usize,
    pub bin_count: usize,
    pub min_support: usize,
    pub q_low: f64,
    pub q_high: f64,
    pub max_gap: Option<f64>,
    pub wt_gap: Option<f64>,
    pub max_gap_ci: Option<(f64, f64)>,
    pub wt_gap_ci: Option<(f64, f64)>,
    pub shared_bins: usize,
    pub support_min: Option<u64>,
    pub support_q25: Option<f64>,
    pub support_median: Option<f64>,
    pub null_q975: Option<f64>,
    pub perm_p: Option<f64>,
    pub bootstrap: usize,
    pub permutations: usize,
    pub bootstrap_skipped: usize,
    pub perm_skipped: usize,
    pub bootstrap_unreliable: bool,
    /// No confidence bin met the support rule in both tertiles; gap
    /// statistics are undefined.
    pub no_shared_support: bool,
    /// Population-std convention for the depth-variance feature.
    pub std_convention: String,
}

/// Everything `diagnose` needs to emit: the report, the curves (plot
/// source), and the feature column (histogram source).
#[derive(Debug, Clone)]
pub struct ProtocolOutput {
    pub report: GapReport,
    pub curves: TertileCurves,
    pub rho: Vec<f64>,
}

/// Run the full protocol on one dataset (no cal/test split: the diagnostic
/// uses every record).
pub fn run_protocol(dataset: &Dataset, config: &DiagnosticsConfig) -> Result<ProtocolOutput> {
    if config.feature.needs_routing() && !dataset.has_routing() {
        return Err(Error::invalid(
            "diagnostics feature needs routing profiles, dataset has none",
        ));
    }
    let rho = feature_column(dataset, &config.feature)?;
    let samples: Vec<(f64, bool)> = dataset
        .records()
        .iter()
        .map(|r| {
            let (_, pred, conf) = softmax_confidence(&r.logits)?;
            Ok((conf, pred == r.label))
        })
        .collect::<Result<_>>()?;
    let curves = matched_confidence_curves(&samples, &rho, config.bin_count, config.min_support)?;
    let cuts = (curves.q_low, curves.q_high);
    let observed_max = max_gap(&curves);
    let observed_wt = weighted_gap(&curves);
    let support = support_summary(&curves);
    let (boot, perm) = match observed_max {
        Some(obs) => {
            let boot = bootstrap_ci(&samples, &rho, cuts, config)?;
            let perm = permutation_test(&samples, &rho, cuts, GapStatistic::MaxGap, obs, config)?;
            (Some(boot), Some(perm))
        }
        None => (None, None),
    };
    let report = GapReport {
        feature: config.feature.name(),
        n: samples.len(),
        bin_count: config.bin_count,
        min_support: config.min_support,
        q_low: cuts.0,
        q_high: cuts.1,
        max_gap: observed_max,
        wt_gap: observed_wt,
        max_gap_ci: boot.as_ref().map(|b| b.max_gap_ci),
        wt_gap_ci: boot.as_ref().map(|b| b.wt_gap_ci),
        shared_bins: curves.shared.len(),
        support_min: support.map(|s| s.0),
        support_q25: support.map(|s| s.1),
        support_median: support.map(|s| s.2),
        null_q975: perm.as_ref().map(|p| p.null_q975),
        perm_p: perm.as_ref().map(|p| p.p),
        bootstrap: config.bootstrap,
        permutations: config.permutations,
        bootstrap_skipped: boot.as_ref().map_or(0, |b| b.skipped),
        perm_skipped: perm.as_ref().map_or(0, |p| p.skipped),
        bootstrap_unreliable: boot.as_ref().is_some_and(|b| b.unreliable),
        no_shared_support: observed_max.is_none(),
        std_convention: "population".into(),
    };
    Ok(ProtocolOutput {
        report,
        curves,
        rho,
    })
}
