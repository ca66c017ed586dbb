//! Calibration diagnostics for classifiers that expose per-sample routing traces.
//!
//! The crate ingests prediction records (logits, label, optional routing
//! weights or per-layer routing-entropy profiles) and provides:
//!
//! - calibration metrics: equal-width/equal-mass ECE, MCE, classwise ECE,
//!   SmoothECE, NLL, Brier, accuracy, and worst-routing-tertile ECE
//!   ([`metrics`]);
//! - post-hoc calibrators: temperature scaling, vector scaling, classwise
//!   temperature, histogram binning, isotonic regression, logit-norm
//!   temperature, margin/entropy cell binning, and a Nadaraya-Watson kernel
//!   family on (confidence, auxiliary feature) ([`calibrate`]);
//! - matched-confidence gap diagnostics with percentile-bootstrap CIs and a
//!   within-confidence-bin permutation test ([`diagnostics`]);
//! - a capacity-matched probe audit (ridge and small-MLP regressors on the
//!   routing profile, with a shuffled-routing control) ([`probe`]);
//! - synthetic substrate generators with known conditional accuracy, plus
//!   numerical validators for the supporting identities ([`synth`]).
//!
//! Everything stochastic draws from an explicit [`rng::RngStream`], so
//! resampling procedures are reproducible bit-for-bit across platforms and
//! thread counts.

pub mod calibrate;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod probe;
pub mod rng;
pub mod stats;
pub mod synth;

pub use data::{Dataset, PredictionRecord, SplitSpec};
pub use error::{Error, Result};
pub use features::FeatureKind;
pub use metrics::{BinScheme, BinningSpec, MetricReport};
pub use rng::RngStream;
