//! Post-hoc calibrators.
//!
//! Every method fits on a calibration set of [`CalSample`]s and applies to
//! logits, producing a full probability vector. Temperature-family methods
//! (plain, classwise, cell-binned, and the kernel family's per-sample
//! temperature) preserve the argmax by construction; the confidence-remap
//! methods (histogram binning, isotonic) redistribute the non-top mass
//! proportionally.

mod binning;
mod isotonic;
mod kernel;
mod lc;
mod rcmmc;
mod temperature;
mod vector;

pub use binning::HistogramModel;
pub use isotonic::{isotonic_fit, IsotonicModel};
pub use kernel::{
    fit_nw_calibrator, nw_fit, nw_predict, scott_bandwidth, select_bandwidth, BandwidthMode,
    KernelSpec, NwCalibrator, NwFeature, NwModel, MULTIPLIER_GRID,
};
pub use lc::LogitNormModel;
pub use rcmmc::{fit_rcmmc, margin_entropy, RcmmcModel, RcmmcOptions};
pub use temperature::{
    fit_classwise_temperature, fit_temperature, solve_temperature, ClasswiseModel,
    TemperatureModel, CONF_BISECTION_TOL,
};
pub use vector::VectorScalingModel;

use serde::{Deserialize, Serialize};

use crate::data::{softmax_confidence, Dataset, PredictionRecord};
use crate::error::{Error, Result};

/// Clip constant for kernel-predicted targets.
pub const EPSILON: f64 = 1e-6;

/// One calibration-set sample with its derived quantities.
#[derive(Debug, Clone)]
pub struct CalSample {
    pub logits: Vec<f64>,
    pub label: usize,
    pub probs: Vec<f64>,
    pub pred: usize,
    pub conf: f64,
    pub correct: bool,
    /// Auxiliary feature consumed by the kernel family (e.g. depth-variance
    /// routing entropy); `None` for methods that ignore it.
    pub feature: Option<f64>,
}

impl CalSample {
    pub fn from_record(record: &PredictionRecord, feature: Option<f64>) -> Result<Self> {
        let (probs, pred, conf) = softmax_confidence(&record.logits)?;
        Ok(Self {
            logits: record.logits.clone(),
            label: record.label,
            correct: pred == record.label,
            probs,
            pred,
            conf,
            feature,
        })
    }
}

/// Score a dataset into calibration samples, attaching the given feature
/// column when provided (must be in dataset order).
pub fn prepare(dataset: &Dataset, feature_column: Option<&[f64]>) -> Result<Vec<CalSample>> {
    if let Some(col) = feature_column {
        if col.len() != dataset.len() {
            return Err(Error::invalid("feature column length mismatch"));
        }
    }
    dataset
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| CalSample::from_record(r, feature_column.map(|col| col[i])))
        .collect()
}

/// The calibrator zoo, by CLI name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    NoCalibration,
    Temperature,
    VectorScaling,
    ClasswiseTemperature,
    HistogramBinning,
    Isotonic,
    LogitNorm,
    Rcmmc,
    NwConf,
    NwPredEntropy,
    ArCondCal,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::NoCalibration,
        Method::Temperature,
        Method::VectorScaling,
        Method::ClasswiseTemperature,
        Method::HistogramBinning,
        Method::Isotonic,
        Method::LogitNorm,
        Method::Rcmmc,
        Method::NwConf,
        Method::NwPredEntropy,
        Method::ArCondCal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::NoCalibration => "none",
            Method::Temperature => "ts",
            Method::VectorScaling => "vs",
            Method::ClasswiseTemperature => "cts",
            Method::HistogramBinning => "hb",
            Method::Isotonic => "iso",
            Method::LogitNorm => "lc",
            Method::Rcmmc => "rcmmc",
            Method::NwConf => "nw-conf",
            Method::NwPredEntropy => "nw-predent",
            Method::ArCondCal => "ar-condcal",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        Method::ALL
            .iter()
            .find(|m| m.name() == name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown method {name:?}")))
    }

    /// Does fitting/applying need a routing feature column?
    pub fn needs_routing(&self) -> bool {
        matches!(self, Method::ArCondCal)
    }
}

/// Clip-event accounting for the kernel family's target projection.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ClipStats {
    pub lower: u64,
    pub upper: u64,
    /// Samples skipped because every logit was equal (confidence is 1/K for
    /// every temperature).
    pub degenerate: u64,
    pub total: u64,
}

impl ClipStats {
    pub fn lower_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.lower as f64 / self.total as f64
        }
    }

    pub fn upper_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.upper as f64 / self.total as f64
        }
    }

    pub fn absorb(&mut self, applied: &Applied) {
        self.total += 1;
        self.lower += applied.clipped_lower as u64;
        self.upper += applied.clipped_upper as u64;
        self.degenerate += applied.degenerate as u64;
    }
}

/// Output of applying a fitted calibrator to one sample.
#[derive(Debug, Clone)]
pub struct Applied {
    pub probs: Vec<f64>,
    pub clipped_lower: bool,
    pub clipped_upper: bool,
    /// The sample could not be calibrated (flat logits); probabilities are
    /// passed through unchanged.
    pub degenerate: bool,
}

impl Applied {
    fn plain(probs: Vec<f64>) -> Self {
        Self {
            probs,
            clipped_lower: false,
            clipped_upper: false,
            degenerate: false,
        }
    }
}

/// A fitted post-hoc calibrator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FittedCalibrator {
    Identity,
    Temperature(TemperatureModel),
    VectorScaling(VectorScalingModel),
    ClasswiseTemperature(ClasswiseModel),
    HistogramBinning(HistogramModel),
    Isotonic(IsotonicModel),
    LogitNorm(LogitNormModel),
    Rcmmc(RcmmcModel),
    Nw(NwCalibrator),
}

/// Knobs shared by the fitting entry point.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub bin_count: usize,
    pub rcmmc: RcmmcOptions,
    pub bandwidth: BandwidthMode,
    /// Seed for deterministic CV folds in bandwidth selection.
    pub seed: u64,
    /// Held-out set for the diagnostic-only oracle bandwidth mode.
    pub oracle_test: Option<Vec<CalSample>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bin_count: 15,
            rcmmc: RcmmcOptions::default(),
            bandwidth: BandwidthMode::ScottTimes(1.0),
            seed: 42,
            oracle_test: None,
        }
    }
}

/// Fit `method` on the calibration samples.
pub fn fit(method: Method, cal: &[CalSample], options: &FitOptions) -> Result<FittedCalibrator> {
    if cal.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    match method {
        Method::NoCalibration => Ok(FittedCalibrator::Identity),
        Method::Temperature => Ok(FittedCalibrator::Temperature(fit_temperature(cal)?)),
        Method::VectorScaling => Ok(FittedCalibrator::VectorScaling(vector::fit_vector_scaling(
            cal,
        )?)),
        Method::ClasswiseTemperature => Ok(FittedCalibrator::ClasswiseTemperature(
            fit_classwise_temperature(cal)?,
        )),
        Method::HistogramBinning => Ok(FittedCalibrator::HistogramBinning(
            binning::fit_histogram_binning(cal, options.bin_count)?,
        )),
        Method::Isotonic => Ok(FittedCalibrator::Isotonic(isotonic::fit_isotonic(cal)?)),
        Method::LogitNorm => Ok(FittedCalibrator::LogitNorm(lc::fit_lc(
            cal,
            options.bin_count,
        )?)),
        Method::Rcmmc => Ok(FittedCalibrator::Rcmmc(rcmmc::fit_rcmmc(
            cal,
            &options.rcmmc,
        )?)),
        Method::NwConf | Method::NwPredEntropy | Method::ArCondCal => {
            let feature = match method {
                Method::NwConf => NwFeature::ConfOnly,
                Method::NwPredEntropy => NwFeature::PredEntropy,
                _ => NwFeature::Routing,
            };
            let multiplier = select_bandwidth(
                cal,
                feature,
                options.bandwidth,
                options.seed,
                options.oracle_test.as_deref(),
            )?;
            Ok(FittedCalibrator::Nw(kernel::fit_nw_calibrator(
                cal,
                feature,
                multiplier,
                options.bandwidth,
            )?))
        }
    }
}

impl FittedCalibrator {
    /// Calibrate one sample. `feature` is the routing feature value for the
    /// kernel family (ignored elsewhere).
    pub fn apply(&self, logits: &[f64], feature: Option<f64>) -> Result<Applied> {
        let (probs, pred, conf) = softmax_confidence(logits)?;
        match self {
            FittedCalibrator::Identity => Ok(Applied::plain(probs)),
            FittedCalibrator::Temperature(model) => {
                let (p, _, _) = softmax_confidence(&scale(logits, 1.0 / model.tau))?;
                Ok(Applied::plain(p))
            }
            FittedCalibrator::VectorScaling(model) => {
                let z = model.transform(logits);
                let (p, _, _) = softmax_confidence(&z)?;
                Ok(Applied::plain(p))
            }
            FittedCalibrator::ClasswiseTemperature(model) => {
                // The predicted class selects the temperature, so the coldest
                // class never overtakes the argmax.
                let tau = model.taus[pred];
                let (p, _, _) = softmax_confidence(&scale(logits, 1.0 / tau))?;
                Ok(Applied::plain(p))
            }
            FittedCalibrator::HistogramBinning(model) => {
                let target = model.lookup(conf);
                Ok(Applied::plain(rescale_top(&probs, pred, target)))
            }
            FittedCalibrator::Isotonic(model) => {
                let target = model.predict(conf);
                Ok(Applied::plain(rescale_top(&probs, pred, target)))
            }
            FittedCalibrator::LogitNorm(model) => {
                let z = lc::normalize(logits)?;
                let (p, _, _) = softmax_confidence(&scale(&z, model.tau))?;
                Ok(Applied::plain(p))
            }
            FittedCalibrator::Rcmmc(model) => {
                let tau = model.temperature_for(&probs);
                let (p, _, _) = softmax_confidence(&scale(logits, 1.0 / tau))?;
                Ok(Applied::plain(p))
            }
            FittedCalibrator::Nw(model) => model.apply(logits, feature),
        }
    }

    /// Apply to a whole evaluation set, tallying clip events.
    pub fn apply_all(&self, samples: &[CalSample]) -> Result<(Vec<Vec<f64>>, ClipStats)> {
        let mut stats = ClipStats::default();
        let mut out = Vec::with_capacity(samples.len());
        for s in samples {
            let applied = self.apply(&s.logits, s.feature)?;
            stats.absorb(&applied);
            out.push(applied.probs);
        }
        Ok((out, stats))
    }
}

pub(crate) fn scale(logits: &[f64], factor: f64) -> Vec<f64> {
    logits.iter().map(|z| z * factor).collect()
}

/// Replace the top-class probability and redistribute the remaining mass
/// proportionally over the other classes.
pub(crate) fn rescale_top(probs: &[f64], pred: usize, new_top: f64) -> Vec<f64> {
    let new_top = new_top.clamp(0.0, 1.0);
    let rest = 1.0 - probs[pred];
    let mut out = vec![0.0; probs.len()];
    if rest <= 0.0 {
        let share = (1.0 - new_top) / (probs.len() - 1) as f64;
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = if k == pred { new_top } else { share };
        }
    } else {
        let factor = (1.0 - new_top) / rest;
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = if k == pred {
                new_top
            } else {
                probs[k] * factor
            };
        }
    }
    out
}

/// Mean NLL of temperature-scaled logits; shared by the temperature-family
/// fitters.
pub(crate) fn nll_at_temperature(cal: &[CalSample], tau: f64) -> f64 {
    let mut total = 0.0;
    for s in cal {
        let scaled: Vec<f64> = s.logits.iter().map(|z| z / tau).collect();
        let lse = crate::stats::log_sum_exp(&scaled);
        total += lse - scaled[s.label];
    }
    total / cal.len() as f64
}

/// Golden-section minimization of a unimodal function on [lo, hi].
pub(crate) fn golden_section_min(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> (f64, bool) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        // Ties move left, so plateaus resolve to the smallest argument.
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let at_boundary = (x - lo).abs() < 10.0 * tol || (hi - x).abs() < 10.0 * tol;
    (x, at_boundary)
}
