//! Calibration metrics.
//!
//! Samples enter as `(confidence, correct)` pairs; probability-vector
//! metrics (NLL, Brier, classwise ECE) take the full simplex vectors.
//! Binned metrics sort samples into a canonical order before accumulating,
//! so results are bit-identical under record permutation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{argmax, quantile};

/// Equal-width bins partition [0,1] into `[b/B, (b+1)/B)` with the final bin
/// closed; equal-mass bins sort by confidence and cut into near-equal blocks
/// (sizes differ by at most one, the remainder spread over leading bins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinScheme {
    EqualWidth,
    EqualMass,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BinningSpec {
    pub bin_count: usize,
    pub scheme: BinScheme,
    /// Bins with fewer samples are ignored by [`mce`]; 0 disables the rule.
    pub min_support: usize,
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self {
            bin_count: 15,
            scheme: BinScheme::EqualWidth,
            min_support: 0,
        }
    }
}

impl BinningSpec {
    pub fn equal_width(bin_count: usize) -> Self {
        Self {
            bin_count,
            scheme: BinScheme::EqualWidth,
            min_support: 0,
        }
    }

    pub fn equal_mass(bin_count: usize) -> Self {
        Self {
            bin_count,
            scheme: BinScheme::EqualMass,
            min_support: 0,
        }
    }
}

/// Equal-width bin index for a confidence in [0,1].
pub fn bin_index(conf: f64, bin_count: usize) -> usize {
    ((conf * bin_count as f64) as usize).min(bin_count - 1)
}

/// Per-bin aggregate used by ECE/MCE and reliability diagrams.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub n: usize,
    pub acc: f64,
    pub conf: f64,
}

fn canonical(samples: &[(f64, bool)]) -> Vec<(f64, bool)> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    v
}

/// Bin a sample list. Empty bins are reported with `n = 0`, `acc = conf = 0`.
pub fn reliability_table(
    samples: &[(f64, bool)],
    spec: &BinningSpec,
) -> Result<Vec<ReliabilityBin>> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to bin"));
    }
    if spec.bin_count == 0 {
        return Err(Error::invalid("bin_count must be >= 1"));
    }
    for &(c, _) in samples {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::invalid(format!("confidence {c} outside [0,1]")));
        }
    }
    let sorted = canonical(samples);
    let b = spec.bin_count;
    let mut bins = Vec::with_capacity(b);
    match spec.scheme {
        BinScheme::EqualWidth => {
            let mut sum_conf = vec![0.0; b];
            let mut sum_correct = vec![0usize; b];
            let mut counts = vec![0usize; b];
            for &(c, t) in &sorted {
                let idx = bin_index(c, b);
                sum_conf[idx] += c;
                sum_correct[idx] += t as usize;
                counts[idx] += 1;
            }
            for i in 0..b {
                let n = counts[i];
                bins.push(ReliabilityBin {
                    bin_lo: i as f64 / b as f64,
                    bin_hi: (i + 1) as f64 / b as f64,
                    n,
                    acc: if n > 0 {
                        sum_correct[i] as f64 / n as f64
                    } else {
                        0.0
                    },
                    conf: if n > 0 { sum_conf[i] / n as f64 } else { 0.0 },
                });
            }
        }
        BinScheme::EqualMass => {
            // Tied confidences are interchangeable; when a cut lands inside
            // a tie group, members enter the straddling bins with the
            // group's pooled accuracy so the binning stays order-free.
            let mut groups: Vec<(f64, usize, usize)> = Vec::new(); // conf, n, correct
            for &(c, t) in &sorted {
                match groups.last_mut() {
                    Some(g) if g.0 == c => {
                        g.1 += 1;
                        g.2 += t as usize;
                    }
                    _ => groups.push((c, 1, t as usize)),
                }
            }
            let n = sorted.len();
            let base = n / b;
            let rem = n % b;
            let mut group_idx = 0;
            let mut taken_from_group = 0usize;
            for i in 0..b {
                let size = base + usize::from(i < rem);
                let mut remaining = size;
                let mut correct_mass = 0.0;
                let mut conf_mass = 0.0;
                let mut lo = 0.0;
                let mut hi = 0.0;
                let mut first = true;
                while remaining > 0 {
                    let (conf, count, correct) = groups[group_idx];
                    let available = count - taken_from_group;
                    let take = available.min(remaining);
                    correct_mass += take as f64 * correct as f64 / count as f64;
                    conf_mass += take as f64 * conf;
                    if first {
                        lo = conf;
                        first = false;
                    }
                    hi = conf;
                    taken_from_group += take;
                    remaining -= take;
                    if taken_from_group == count {
                        group_idx += 1;
                        taken_from_group = 0;
                    }
                }
                bins.push(ReliabilityBin {
                    bin_lo: lo,
                    bin_hi: hi,
                    n: size,
                    acc: if size > 0 {
                        correct_mass / size as f64
                    } else {
                        0.0
                    },
                    conf: if size > 0 {
                        conf_mass / size as f64
                    } else {
                        0.0
                    },
                });
            }
        }
    }
    Ok(bins)
}

/// Expected calibration error: `sum_b (n_b / n) * |acc_b - conf_b|`.
pub fn ece(samples: &[(f64, bool)], spec: &BinningSpec) -> Result<f64> {
    let bins = reliability_table(samples, spec)?;
    let n = samples.len() as f64;
    Ok(bins
        .iter()
        .filter(|bin| bin.n > 0)
        .map(|bin| bin.n as f64 / n * (bin.acc - bin.conf).abs())
        .sum())
}

/// Maximum calibration error over bins with at least `spec.min_support`
/// samples (0 when no bin qualifies).
pub fn mce(samples: &[(f64, bool)], spec: &BinningSpec) -> Result<f64> {
    let bins = reliability_table(samples, spec)?;
    Ok(bins
        .iter()
        .filter(|bin| bin.n >= spec.min_support.max(1))
        .map(|bin| (bin.acc - bin.conf).abs())
        .fold(0.0, f64::max))
}

/// Index sets of the three routing tertiles, cut at the empirical 1/3 and
/// 2/3 quantiles of the feature: `low: rho <= q_low`,
/// `mid: q_low < rho <= q_high`, `high: rho > q_high`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TertileSplit {
    pub q_low: f64,
    pub q_high: f64,
    pub low: Vec<usize>,
    pub mid: Vec<usize>,
    pub high: Vec<usize>,
}

impl TertileSplit {
    /// Cut points from the evaluation set itself. Errors when any tertile
    /// comes out empty (e.g. a constant feature), since a max over empty
    /// index sets is undefined.
    pub fn from_feature(rho: &[f64]) -> Result<Self> {
        if rho.len() < 3 {
            return Err(Error::invalid("need at least 3 samples for tertiles"));
        }
        let q_low = quantile(rho, 1.0 / 3.0);
        let q_high = quantile(rho, 2.0 / 3.0);
        let split = Self::with_cuts(rho, q_low, q_high);
        if split.low.is_empty() || split.mid.is_empty() || split.high.is_empty() {
            return Err(Error::degenerate(
                "degenerate tertiles: a tertile of the routing feature is empty",
            ));
        }
        Ok(split)
    }

    /// Assignment with externally fixed cut points (used by resampling,
    /// where cuts from the original sample are held fixed). Empty sets are
    /// allowed here; callers handle them.
    pub fn with_cuts(rho: &[f64], q_low: f64, q_high: f64) -> Self {
        let mut low = Vec::new();
        let mut mid = Vec::new();
        let mut high = Vec::new();
        for (i, &r) in rho.iter().enumerate() {
            if r <= q_low {
                low.push(i);
            } else if r <= q_high {
                mid.push(i);
            } else {
                high.push(i);
            }
        }
        Self {
            q_low,
            q_high,
            low,
            mid,
            high,
        }
    }

    pub fn sets(&self) -> [&[usize]; 3] {
        [&self.low, &self.mid, &self.high]
    }
}

/// Worst-tertile ECE: cut tertiles on `rho`, compute ECE within each, report
/// the maximum together with the per-tertile values and the split.
pub fn worst_tertile_ece(
    samples: &[(f64, bool)],
    rho: &[f64],
    spec: &BinningSpec,
) -> Result<(f64, [f64; 3], TertileSplit)> {
    if samples.len() != rho.len() {
        return Err(Error::invalid("rho length mismatch"));
    }
    let split = TertileSplit::from_feature(rho)?;
    let mut per = [0.0; 3];
    for (slot, set) in per.iter_mut().zip(split.sets()) {
        let subset: Vec<(f64, bool)> = set.iter().map(|&i| samples[i]).collect();
        *slot = ece(&subset, spec)?;
    }
    let worst = per.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((worst, per, split))
}

/// Mean of per-class ECE, where class `k` contributes the ECE of
/// `(p_k, 1{y=k})` pairs.
pub fn classwise_ece(probs: &[Vec<f64>], labels: &[usize], spec: &BinningSpec) -> Result<f64> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::invalid("probs/labels length mismatch"));
    }
    let k = probs[0].len();
    if k < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    let mut total = 0.0;
    for class in 0..k {
        let samples: Vec<(f64, bool)> = probs
            .iter()
            .zip(labels)
            .map(|(p, &y)| (p[class], y == class))
            .collect();
        total += ece(&samples, spec)?;
    }
    Ok(total / k as f64)
}

/// Result of the kernel-smoothed calibration error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoothEce {
    pub value: f64,
    /// Kernel width used (the fixed point `smece(sigma) = sigma` unless a
    /// width was supplied).
    pub sigma: f64,
    /// Set when the fixed point was not bracketed in [1e-4, 1] and an
    /// endpoint value was returned instead.
    pub warning: bool,
}

const SMECE_GRID: usize = 1024;
const SMECE_SIGMA_LO: f64 = 1e-4;
const SMECE_SIGMA_HI: f64 = 1.0;

/// Histogram of residual mass and counts on the confidence grid.
struct SmoothHist {
    rsum: Vec<f64>,
    count: Vec<f64>,
    n: f64,
}

impl SmoothHist {
    fn build(samples: &[(f64, bool)]) -> Self {
        let sorted = canonical(samples);
        let mut rsum = vec![0.0; SMECE_GRID];
        let mut count = vec![0.0; SMECE_GRID];
        for &(c, t) in &sorted {
            let idx = bin_index(c, SMECE_GRID);
            rsum[idx] += (t as usize) as f64 - c;
            count[idx] += 1.0;
        }
        Self {
            rsum,
            count,
            n: samples.len() as f64,
        }
    }

    /// smece(sigma): Nadaraya-Watson smoothing of the residual on the grid
    /// with a Gaussian kernel reflected at 0 and 1, then the mean absolute
    /// smoothed residual under the empirical confidence measure.
    ///
    /// Cell centers are equally spaced, so the kernel only depends on the
    /// index distance (direct term) or index sum (reflected terms); one
    /// lookup table covers all three.
    fn smece(&self, sigma: f64) -> f64 {
        let m = SMECE_GRID;
        let cell_sigma = sigma * m as f64;
        let window = ((8.0 * cell_sigma).ceil() as usize).min(2 * m);
        // w[i] = exp(-(i / cell_sigma)^2 / 2), zero beyond the window.
        let mut w = vec![0.0; 2 * m + 1];
        for (i, slot) in w.iter_mut().enumerate().take(window + 1) {
            let d = i as f64 / cell_sigma;
            *slot = (-0.5 * d * d).exp();
        }
        let mut total = 0.0;
        for j in 0..m {
            if self.count[j] == 0.0 {
                continue;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            // Direct term: |j - k| <= window.
            let k_lo = j.saturating_sub(window);
            let k_hi = (j + window + 1).min(m);
            for k in k_lo..k_hi {
                let wk = w[j.abs_diff(k)];
                num += wk * self.rsum[k];
                den += wk * self.count[k];
            }
            // Reflection across 0: distance j + k + 1.
            let k_hi = window.saturating_sub(j + 1).min(m);
            for k in 0..k_hi {
                let wk = w[j + k + 1];
                num += wk * self.rsum[k];
                den += wk * self.count[k];
            }
            // Reflection across 1: distance 2m - 1 - j - k.
            let k_lo = (2 * m - 1 - j).saturating_sub(window).min(m);
            for k in k_lo..m {
                let wk = w[2 * m - 1 - j - k];
                num += wk * self.rsum[k];
                den += wk * self.count[k];
            }
            if den > 0.0 {
                total += self.count[j] * (num / den).abs();
            }
        }
        total / self.n
    }
}

/// Kernel-smoothed calibration error. With `kernel_sigma = None` the width
/// is the fixed point of `smece(sigma) = sigma`, found by bisection on
/// [1e-4, 1].
pub fn smooth_ece(samples: &[(f64, bool)], kernel_sigma: Option<f64>) -> Result<SmoothEce> {
    if samples.len() < 2 {
        return Err(Error::invalid("smooth ECE needs at least 2 samples"));
    }
    for &(c, _) in samples {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::invalid(format!("confidence {c} outside [0,1]")));
        }
    }
    let hist = SmoothHist::build(samples);
    if let Some(sigma) = kernel_sigma {
        if sigma <= 0.0 {
            return Err(Error::invalid("kernel sigma must be positive"));
        }
        return Ok(SmoothEce {
            value: hist.smece(sigma),
            sigma,
            warning: false,
        });
    }
    let f = |sigma: f64| hist.smece(sigma) - sigma;
    let (mut lo, mut hi) = (SMECE_SIGMA_LO, SMECE_SIGMA_HI);
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo <= 0.0 {
        // Already below the line at the smallest width: essentially calibrated.
        return Ok(SmoothEce {
            value: hist.smece(lo),
            sigma: lo,
            warning: true,
        });
    }
    if f_hi >= 0.0 {
        return Ok(SmoothEce {
            value: hist.smece(hi),
            sigma: hi,
            warning: true,
        });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let sigma = 0.5 * (lo + hi);
    Ok(SmoothEce {
        value: hist.smece(sigma),
        sigma,
        warning: false,
    })
}

/// Mean negative log-likelihood of the true class, probabilities floored at
/// 1e-12 to keep the score finite.
pub fn nll(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_prob_inputs(probs, labels)?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p[y].max(1e-12).ln())
        .sum();
    Ok(total / probs.len() as f64)
}

/// Mean multiclass Brier score `sum_k (p_k - 1{y=k})^2`, in [0, 2].
pub fn brier(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_prob_inputs(probs, labels)?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            p.iter()
                .enumerate()
                .map(|(k, &pk)| {
                    let target = if k == y { 1.0 } else { 0.0 };
                    (pk - target) * (pk - target)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Top-1 accuracy (argmax ties resolved to the lowest class index).
pub fn acc1(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_prob_inputs(probs, labels)?;
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, &y)| argmax(p) == y)
        .count();
    Ok(hits as f64 / probs.len() as f64)
}

fn check_prob_inputs(probs: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::invalid("probs/labels length mismatch"));
    }
    Ok(())
}

/// The full metric battery for one (probs, labels, feature) evaluation.
/// `worst_tertile_ece` needs a routing feature; it is `None` when the
/// dataset has no routing data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub ece: f64,
    pub adaece: f64,
    pub mce: f64,
    pub classwise_ece: f64,
    pub smooth_ece: f64,
    pub smooth_ece_sigma: f64,
    pub smooth_ece_warning: bool,
    pub nll: f64,
    pub brier: f64,
    pub acc1: f64,
    pub worst_tertile_ece: Option<f64>,
    pub per_tertile_ece: Option<[f64; 3]>,
}

/// Extract `(confidence, correct)` pairs from probability vectors.
pub fn conf_correct(probs: &[Vec<f64>], labels: &[usize]) -> Vec<(f64, bool)> {
    probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let pred = argmax(p);
            (p[pred], pred == y)
        })
        .collect()
}

/// Compute every metric at the given binning resolution. MCE applies its
/// conventional minimum support of 5.
pub fn compute_report(
    probs: &[Vec<f64>],
    labels: &[usize],
    rho: Option<&[f64]>,
    bin_count: usize,
) -> Result<MetricReport> {
    let samples = conf_correct(probs, labels);
    let width = BinningSpec::equal_width(bin_count);
    let mass = BinningSpec::equal_mass(bin_count);
    let mce_spec = BinningSpec {
        min_support: 5,
        ..width
    };
    let smooth = smooth_ece(&samples, None)?;
    let (worst, per) = match rho {
        Some(rho) => {
            let (w, p, _) = worst_tertile_ece(&samples, rho, &width)?;
            (Some(w), Some(p))
        }
        None => (None, None),
    };
    Ok(MetricReport {
        ece: ece(&samples, &width)?,
        adaece: ece(&samples, &mass)?,
        mce: mce(&samples, &mce_spec)?,
        classwise_ece: classwise_ece(probs, labels, &width)?,
        smooth_ece: smooth.value,
        smooth_ece_sigma: smooth.sigma,
        smooth_ece_warning: smooth.warning,
        nll: nll(probs, labels)?,
        brier: brier(probs, labels)?,
        acc1: acc1(probs, labels)?,
        worst_tertile_ece: worst,
        per_tertile_ece: per,
    })
}
