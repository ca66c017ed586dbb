//! Temperature scaling: one scalar, or one per class, plus the shared
//! confidence-target bisection used by the per-sample kernel calibrators.

use serde::{Deserialize, Serialize};

use super::{golden_section_min, nll_at_temperature, CalSample};
use crate::error::{Error, Result};
use crate::stats::log_sum_exp;

/// Search range for log(tau) in the NLL fitters.
const LOG_TAU_RANGE: (f64, f64) = (-4.0, 4.0);
/// Bisection bracket for the per-sample confidence solve. Wide enough that
/// every target in [1/K + eps, 1 - eps] is reachable for any non-flat logit
/// vector of moderate scale: the clip bounds sit ~1e-6 from the confidence
/// limits, while tau = e^25 flattens a unit logit gap to within ~1e-11 of
/// 1/K and tau = e^-25 sharpens it to within ~1e-11 of 1.
const LOG_TAU_BRACKET: (f64, f64) = (-25.0, 25.0);
/// Confidence tolerance for the per-sample solve.
pub const CONF_BISECTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub tau: f64,
    /// The optimum landed on the edge of the search range (degenerate
    /// calibration sets, e.g. all-correct with huge margins).
    pub at_boundary: bool,
}

/// Fit a single temperature by minimizing mean NLL of `softmax(z / tau)`;
/// golden-section search on log tau.
pub fn fit_temperature(cal: &[CalSample]) -> Result<TemperatureModel> {
    if cal.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    let (log_tau, at_boundary) = golden_section_min(
        |lt| nll_at_temperature(cal, lt.exp()),
        LOG_TAU_RANGE.0,
        LOG_TAU_RANGE.1,
        1e-6,
    );
    Ok(TemperatureModel {
        tau: log_tau.exp(),
        at_boundary,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClasswiseModel {
    /// One temperature per class; the predicted class selects which one is
    /// applied, keeping the argmax intact.
    pub taus: Vec<f64>,
    pub any_boundary: bool,
}

/// One temperature per class, fit on the one-vs-rest NLL of that class's
/// temperature-scaled probability.
pub fn fit_classwise_temperature(cal: &[CalSample]) -> Result<ClasswiseModel> {
    if cal.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    let k = cal[0].logits.len();
    let mut taus = Vec::with_capacity(k);
    let mut any_boundary = false;
    for class in 0..k {
        let objective = |lt: f64| {
            let tau = lt.exp();
            let mut total = 0.0;
            for s in cal {
                let scaled: Vec<f64> = s.logits.iter().map(|z| z / tau).collect();
                let log_p = scaled[class] - log_sum_exp(&scaled);
                let p = log_p.exp().clamp(1e-12, 1.0 - 1e-12);
                total -= if s.label == class {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                };
            }
            total / cal.len() as f64
        };
        let (log_tau, boundary) =
            golden_section_min(objective, LOG_TAU_RANGE.0, LOG_TAU_RANGE.1, 1e-6);
        taus.push(log_tau.exp());
        any_boundary |= boundary;
    }
    Ok(ClasswiseModel { taus, any_boundary })
}

/// Outcome of solving `softmax(z / tau)_pred = target`.
#[derive(Debug, Clone, Copy)]
pub struct TemperatureSolve {
    pub tau: f64,
    pub achieved: f64,
    /// Target fell outside what any temperature in the bracket can reach and
    /// was moved to the nearest achievable confidence first.
    pub target_unreachable: bool,
}

fn conf_at_log_tau(logits: &[f64], pred: usize, log_tau: f64) -> f64 {
    let tau = log_tau.exp();
    let scaled: Vec<f64> = logits.iter().map(|z| z / tau).collect();
    (scaled[pred] - log_sum_exp(&scaled)).exp()
}

/// Bisection on log tau in [-8, 8] for the temperature whose scaled softmax
/// confidence equals `target`. Confidence is strictly decreasing in tau, so
/// the bracket is monotone. Flat logit vectors (confidence pinned at 1/K)
/// are rejected as degenerate.
pub fn solve_temperature(logits: &[f64], pred: usize, target: f64) -> Result<TemperatureSolve> {
    let z_max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z_min = logits.iter().cloned().fold(f64::INFINITY, f64::min);
    if z_max == z_min {
        return Err(Error::degenerate(
            "flat logits: confidence is 1/K at every temperature",
        ));
    }
    let (mut lo, mut hi) = LOG_TAU_BRACKET;
    let conf_hi = conf_at_log_tau(logits, pred, lo); // small tau: sharpest
    let conf_lo = conf_at_log_tau(logits, pred, hi); // large tau: flattest
    let mut target = target;
    let mut target_unreachable = false;
    if target > conf_hi {
        target = conf_hi;
        target_unreachable = true;
    } else if target < conf_lo {
        target = conf_lo;
        target_unreachable = true;
    }
    let mut mid = 0.0;
    let mut achieved = conf_at_log_tau(logits, pred, mid);
    for _ in 0..200 {
        if (achieved - target).abs() <= CONF_BISECTION_TOL {
            break;
        }
        if achieved > target {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        achieved = conf_at_log_tau(logits, pred, mid);
    }
    Ok(TemperatureSolve {
        tau: mid.exp(),
        achieved,
        target_unreachable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::testutil::softmax_generated;
    use crate::calibrate::{nll_at_temperature, CalSample};
    use crate::data::PredictionRecord;

    #[test]
    fn recovers_unit_temperature() {
        let cal = softmax_generated(4000, 4, 1.0, 3);
        let model = fit_temperature(&cal).unwrap();
        assert!(
            (model.tau - 1.0).abs() < 1e-1,
            "tau = {} should be near 1",
            model.tau
        );
        // The fitted tau must not be worse than tau = 1 on its own objective.
        assert!(nll_at_temperature(&cal, model.tau) <= nll_at_temperature(&cal, 1.0) + 1e-9);
    }

    #[test]
    fn recovers_doubled_scale() {
        // Labels drawn from softmax(z / 2): optimal temperature 2.
        let cal = softmax_generated(4000, 4, 0.5, 5);
        let model = fit_temperature(&cal).unwrap();
        assert!(
            (model.tau - 2.0).abs() < 0.2,
            "tau = {} should be near 2",
            model.tau
        );
    }

    /// Label frequencies equal to softmax(z) exactly, realized by choosing
    /// logit vectors with small-denominator rational softmax and
    /// duplicating records in proportion. The empirical NLL then has its
    /// exact minimum at temperature 1 (the score of the temperature family
    /// vanishes there), so the fit recovers it to optimizer tolerance.
    fn exact_softmax_set(scale: f64) -> Vec<CalSample> {
        // (logits, per-class counts proportional to softmax(logits)).
        let bases: [(Vec<f64>, Vec<usize>); 3] = [
            (vec![3f64.ln(), 0.0], vec![3, 1]),          // probs (3/4, 1/4)
            (vec![0.0, 4f64.ln()], vec![1, 4]),          // probs (1/5, 4/5)
            (vec![2f64.ln(), 0.0], vec![2, 1]),          // probs (2/3, 1/3)
        ];
        let mut cal = Vec::new();
        for (i, (logits, counts)) in bases.iter().enumerate() {
            let scaled: Vec<f64> = logits.iter().map(|z| z * scale).collect();
            for (label, &count) in counts.iter().enumerate() {
                for copy in 0..count {
                    let record = PredictionRecord::new(
                        format!("e{i}_{label}_{copy}"),
                        scaled.clone(),
                        label,
                    );
                    cal.push(CalSample::from_record(&record, None).unwrap());
                }
            }
        }
        cal
    }

    #[test]
    fn exact_softmax_set_recovers_unit_temperature() {
        let model = fit_temperature(&exact_softmax_set(1.0)).unwrap();
        assert!(
            (model.tau - 1.0).abs() < 1e-3,
            "tau = {} should be 1 within 1e-3",
            model.tau
        );
        assert!(!model.at_boundary);
    }

    #[test]
    fn exact_softmax_set_recovers_doubled_temperature() {
        // Same label frequencies, logits doubled: minimum moves to tau = 2.
        let model = fit_temperature(&exact_softmax_set(2.0)).unwrap();
        assert!(
            (model.tau - 2.0).abs() < 2e-3,
            "tau = {} should be 2 within 2e-3",
            model.tau
        );
    }

    #[test]
    fn boundary_flagged_on_degenerate_set() {
        // All correct with huge margins: NLL decreases monotonically in
        // sharpness, pushing tau to the low edge.
        let cal: Vec<CalSample> = (0..50)
            .map(|i| {
                let r = PredictionRecord::new(format!("d{i}"), vec![30.0, 0.0], 0);
                CalSample::from_record(&r, None).unwrap()
            })
            .collect();
        let model = fit_temperature(&cal).unwrap();
        assert!(model.at_boundary);
    }

    #[test]
    fn classwise_matches_plain_on_symmetric_data() {
        let cal = softmax_generated(2000, 3, 1.0, 9);
        let model = fit_classwise_temperature(&cal).unwrap();
        assert_eq!(model.taus.len(), 3);
        for tau in &model.taus {
            assert!((tau - 1.0).abs() < 0.25, "tau = {tau}");
        }
    }

    #[test]
    fn bisection_identity_case() {
        // softmax((2,0))_0 = 1/(1+e^-2); asking for exactly that gives tau 1.
        let target = 1.0 / (1.0 + (-2.0f64).exp());
        let solve = solve_temperature(&[2.0, 0.0], 0, target).unwrap();
        assert!((solve.tau - 1.0).abs() < 1e-6);
        assert!((solve.achieved - target).abs() <= CONF_BISECTION_TOL);
    }

    #[test]
    fn bisection_half_temperature_case() {
        // Target sigma(4) requires tau = 0.5 for z = (2, 0).
        let target = 1.0 / (1.0 + (-4.0f64).exp());
        let solve = solve_temperature(&[2.0, 0.0], 0, target).unwrap();
        assert!((solve.tau - 0.5).abs() < 1e-6);
    }

    #[test]
    fn bisection_rejects_flat_logits() {
        assert!(solve_temperature(&[1.0, 1.0, 1.0], 0, 0.5).is_err());
    }

    #[test]
    fn unreachable_target_is_clamped() {
        // Sub-denormal margin: even the sharpest bracket temperature cannot
        // reach confidence near 1.
        let solve = solve_temperature(&[1e-15, 0.0], 0, 1.0 - 1e-6).unwrap();
        assert!(solve.target_unreachable);
        assert!(
            (solve.achieved - conf_at_log_tau(&[1e-15, 0.0], 0, LOG_TAU_BRACKET.0)).abs()
                <= CONF_BISECTION_TOL
        );
    }

    #[test]
    fn clip_bounds_are_reachable_for_ordinary_logits() {
        // Both projection bounds must sit inside the bracket's reach.
        for (z, k) in [(vec![2.0, 0.0], 2.0), (vec![1.5, 0.3, -0.7, 0.0], 4.0)] {
            for target in [1.0 / k + 1e-6, 1.0 - 1e-6] {
                let solve = solve_temperature(&z, 0, target).unwrap();
                assert!(!solve.target_unreachable);
                assert!((solve.achieved - target).abs() <= CONF_BISECTION_TOL);
            }
        }
    }
}
