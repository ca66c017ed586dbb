//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with its measured quantity. Run with
//! `cargo test -p calkit-core --test acceptance -- --nocapture` to see the
//! lines; thresholds are enforced by the assertions either way.

use std::time::Instant;

use rayon::prelude::*;

use calkit_core::calibrate::{fit_classwise_temperature, fit_temperature};
use calkit_core::calibrate::{
    fit_nw_calibrator, fit_rcmmc, nw_fit, nw_predict, scott_bandwidth, solve_temperature,
    BandwidthMode, CalSample, ClipStats, NwFeature, RcmmcOptions, EPSILON,
};
use calkit_core::data::{softmax_confidence, PredictionRecord};
use calkit_core::diagnostics::{
    matched_confidence_curves, max_gap, permutation_test, DiagnosticsConfig, GapStatistic,
};
use calkit_core::metrics::{ece, worst_tertile_ece, BinningSpec};
use calkit_core::probe::{run_audit, Mlp, ProbeConfig};
use calkit_core::rng::{RngStream, StreamDomain};
use calkit_core::stats::argmax;
use calkit_core::synth::{
    check_prop1, check_prop2, check_prop4, generate_planted, generate_smooth, smooth_g,
    DiscreteJoint, GroupSpec, OffsetFn, PlantedSubstrateSpec, RoutingAxis, TwoGroupSpec,
};
use calkit_core::Dataset;

fn pass(criterion: &str, detail: String, started: Instant) {
    println!(
        "PASS {criterion}: {detail} ({:.2}s)",
        started.elapsed().as_secs_f64()
    );
}

/// (confidence, correct) pairs plus the routing value for each record.
fn scored(dataset: &Dataset) -> Vec<(f64, bool)> {
    dataset
        .records()
        .iter()
        .map(|r| {
            let (_, pred, conf) = softmax_confidence(&r.logits).unwrap();
            (conf, pred == r.label)
        })
        .collect()
}

/// Calibration samples with labels drawn from softmax(z * sharpness).
fn softmax_cal_set(n: usize, k: usize, sharpness: f64, seed: u64) -> Vec<CalSample> {
    let mut rng = RngStream::derive(seed, StreamDomain::Synth, 9);
    (0..n)
        .map(|i| {
            let logits: Vec<f64> = (0..k).map(|_| 2.0 * rng.next_normal()).collect();
            let scaled: Vec<f64> = logits.iter().map(|z| z * sharpness).collect();
            let (probs, _, _) = softmax_confidence(&scaled).unwrap();
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut label = k - 1;
            for (j, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    label = j;
                    break;
                }
            }
            let record = PredictionRecord::new(format!("c{i}"), logits, label);
            CalSample::from_record(&record, Some(rng.next_f64())).unwrap()
        })
        .collect()
}

// --- criterion 1 -----------------------------------------------------------

/// Independent reference: same documented bin rule, but per-bin statistics
/// accumulated by separate full scans over the sample list.
fn brute_force_ece(samples: &[(f64, bool)], bins: usize) -> f64 {
    let n = samples.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let members: Vec<&(f64, bool)> = samples
            .iter()
            .filter(|(c, _)| ((c * bins as f64) as usize).min(bins - 1) == b)
            .collect();
        if members.is_empty() {
            continue;
        }
        let acc = members.iter().filter(|(_, t)| *t).count() as f64 / members.len() as f64;
        let conf = members.iter().map(|(c, _)| c).sum::<f64>() / members.len() as f64;
        total += members.len() as f64 / n * (acc - conf).abs();
    }
    total
}

#[test]
fn criterion_01_ece_oracle_equivalence() {
    let started = Instant::now();
    let spec = BinningSpec::equal_width(15);
    let mut rng = RngStream::derive(1001, StreamDomain::Synth, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = 1 + rng.next_index(12);
        let samples: Vec<(f64, bool)> = (0..n)
            .map(|_| (rng.next_f64(), rng.next_bool(0.5)))
            .collect();
        let lib = ece(&samples, &spec).unwrap();
        let reference = brute_force_ece(&samples, 15);
        worst = worst.max((lib - reference).abs());
    }
    assert!(worst <= 1e-15, "max |library - brute force| = {worst}");
    pass(
        "criterion 1 (ECE oracle equivalence)",
        format!("1000 datasets, max deviation {worst:.2e} <= 1e-15"),
        started,
    );
}

// --- criterion 2 -----------------------------------------------------------

#[test]
fn criterion_02_worst_tertile_construction() {
    let started = Instant::now();
    let targets = [0.05, 0.10, 0.20];
    let spec = PlantedSubstrateSpec {
        n: 30_000,
        class_count: 2,
        layer_count: 1,
        conf_beta: (1.0, 1.0),
        conf_range: (0.55, 0.95),
        groups: targets
            .iter()
            .zip([0.2, 0.5, 0.8])
            .map(|(&delta, center)| GroupSpec {
                weight: 1.0 / 3.0,
                r_mean: center,
                r_sd: 0.03,
                offset: OffsetFn::Constant(-delta),
            })
            .collect(),
        depth_std: 0.0,
        routing_axis: RoutingAxis::Mean,
        seed: 2002,
    };
    let (dataset, truth) = generate_planted(&spec).unwrap();
    let samples = scored(&dataset);
    let (worst, per, _) =
        worst_tertile_ece(&samples, &truth.routing, &BinningSpec::equal_width(15)).unwrap();
    for (value, target) in per.iter().zip(targets) {
        assert!(
            (value - target).abs() <= 0.02,
            "per-tertile ECE {value:.4} vs target {target}"
        );
    }
    assert!(
        (0.16..=0.24).contains(&worst),
        "worst-tertile ECE {worst:.4} outside [0.16, 0.24]"
    );
    let max_of_three = per.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(worst, max_of_three, "worst must equal max of the three");
    pass(
        "criterion 2 (worst-tertile construction)",
        format!(
            "per-tertile ({:.3}, {:.3}, {:.3}), worst {worst:.3} in [0.16, 0.24], equals max exactly",
            per[0], per[1], per[2]
        ),
        started,
    );
}

// --- criterion 3 -----------------------------------------------------------

#[test]
fn criterion_03_prop1_identity() {
    let started = Instant::now();
    let mut rng = RngStream::derive(3003, StreamDomain::Synth, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let joint = DiscreteJoint::random(&mut rng);
        let (gain, explained) = check_prop1(&joint).unwrap();
        worst = worst.max((gain - explained).abs());
    }
    assert!(worst < 1e-12, "max |gain - explained variance| = {worst}");
    pass(
        "criterion 3 (oracle gain = explained variance)",
        format!("100 random joints, max |difference| {worst:.2e} < 1e-12"),
        started,
    );
}

// --- criterion 4 -----------------------------------------------------------

#[test]
fn criterion_04_prop2_bound() {
    let started = Instant::now();
    let mut rng = RngStream::derive(4004, StreamDomain::Synth, 0);
    for _ in 0..100 {
        let a = rng.next_f64();
        let b = rng.next_f64();
        let eta = [a, b];
        let bound = 0.5 * (a - b).abs();
        for i in 0..=100 {
            let pi = i as f64 / 100.0;
            let (mismatch, reported_bound) = check_prop2(&eta, pi).unwrap();
            assert!((reported_bound - bound).abs() < 1e-15);
            assert!(
                mismatch >= bound - 1e-15,
                "mismatch {mismatch} < bound {bound} at pi {pi}"
            );
        }
        let (mid_mismatch, _) = check_prop2(&eta, 0.5 * (a + b)).unwrap();
        assert!(
            (mid_mismatch - bound).abs() < 1e-12,
            "midpoint mismatch {mid_mismatch} vs bound {bound}"
        );
    }
    pass(
        "criterion 4 (confidence-only blind-spot bound)",
        "100 eta pairs x 101-point grid, mismatch >= spread/2; equality at midpoint within 1e-12"
            .into(),
        started,
    );
}

// --- criterion 5 -----------------------------------------------------------

#[test]
fn criterion_05_prop4_point_mass() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for h in [0.05, 0.2, 0.5] {
        for ratio in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let spec = TwoGroupSpec {
                d: ratio * h,
                f_minus: 0.9,
                f_plus: 0.15,
                h,
                n: 0,
            };
            let (analytic, empirical) = check_prop4(&spec).unwrap();
            worst = worst.max((analytic - empirical).abs());
        }
    }
    assert!(worst < 1e-12, "max |analytic - kernel| = {worst}");
    // d = 2h: the shrinkage factor is tanh(1).
    let spec = TwoGroupSpec {
        d: 0.4,
        f_minus: 1.0,
        f_plus: 0.0,
        h: 0.2,
        n: 0,
    };
    let (analytic, _) = check_prop4(&spec).unwrap();
    assert!((analytic - 1f64.tanh()).abs() < 1e-12);
    assert!((analytic - 0.761594).abs() < 1e-6);
    pass(
        "criterion 5 (bandwidth-shrinkage factor)",
        format!("15 (d, h) pairs, max |analytic - kernel| {worst:.2e} < 1e-12; tanh(1) at d = 2h"),
        started,
    );
}

// --- criteria 6 & 7 --------------------------------------------------------

fn permutation_p_on_planted(gap: f64, n: usize, permutations: usize, seed: u64) -> Option<f64> {
    let spec = PlantedSubstrateSpec::two_group(n, 2, 1, gap, (0.6, 0.8), seed);
    let (dataset, truth) = generate_planted(&spec).unwrap();
    let samples = scored(&dataset);
    let rho = &truth.routing;
    let curves = matched_confidence_curves(&samples, rho, 15, 5).unwrap();
    let observed = max_gap(&curves)?;
    let config = DiagnosticsConfig {
        permutations,
        seed,
        ..Default::default()
    };
    let result = permutation_test(
        &samples,
        rho,
        (curves.q_low, curves.q_high),
        GapStatistic::MaxGap,
        observed,
        &config,
    )
    .unwrap();
    Some(result.p)
}

#[test]
fn criterion_06_permutation_null_calibration() {
    let started = Instant::now();
    let trials = 200;
    let rejections: usize = (0..trials)
        .map(|t| {
            let p = permutation_p_on_planted(0.0, 10_000, 1000, 6000 + t).unwrap();
            usize::from(p <= 0.05)
        })
        .sum();
    let rate = rejections as f64 / trials as f64;
    assert!(
        (0.03..=0.07).contains(&rate),
        "null rejection rate {rate} outside [0.03, 0.07] ({rejections}/{trials})"
    );
    pass(
        "criterion 6 (permutation-test null calibration)",
        format!("rejection rate {rate:.3} in [0.03, 0.07] over {trials} trials at alpha 0.05"),
        started,
    );
}

#[test]
fn criterion_07_permutation_power() {
    let started = Instant::now();
    let trials = 50;
    let rejections: usize = (0..trials)
        .map(|t| {
            let p = permutation_p_on_planted(0.3, 10_000, 1000, 7000 + t).unwrap();
            usize::from(p < 0.05)
        })
        .sum();
    let rate = rejections as f64 / trials as f64;
    assert!(
        rate >= 0.8,
        "power {rate} below 0.8 ({rejections}/{trials})"
    );
    pass(
        "criterion 7 (permutation-test power)",
        format!("planted gap 0.3 rejected in {rejections}/{trials} trials (>= 80%)"),
        started,
    );
}

// --- criterion 8 -----------------------------------------------------------

#[test]
fn criterion_08_argmax_preservation() {
    let started = Instant::now();
    let k = 5;
    let cal = softmax_cal_set(2000, k, 0.8, 8008);
    let ts = fit_temperature(&cal).unwrap();
    let cts = fit_classwise_temperature(&cal).unwrap();
    let rcmmc = fit_rcmmc(&cal, &RcmmcOptions::default()).unwrap();
    let condcal = fit_nw_calibrator(
        &cal,
        NwFeature::Routing,
        1.0,
        BandwidthMode::ScottTimes(1.0),
    )
    .unwrap();
    let n = 100_000u64;
    let violations: usize = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::derive(8800, StreamDomain::Synth, i);
            let logits: Vec<f64> = (0..k).map(|_| 2.0 * rng.next_normal()).collect();
            let feature = rng.next_f64();
            let (probs, pred, _) = softmax_confidence(&logits).unwrap();
            let mut bad = 0;
            let scaled: Vec<f64> = logits.iter().map(|z| z / ts.tau).collect();
            bad += usize::from(argmax(&softmax_confidence(&scaled).unwrap().0) != pred);
            let scaled: Vec<f64> = logits.iter().map(|z| z / cts.taus[pred]).collect();
            bad += usize::from(argmax(&softmax_confidence(&scaled).unwrap().0) != pred);
            let tau = rcmmc.temperature_for(&probs);
            let scaled: Vec<f64> = logits.iter().map(|z| z / tau).collect();
            bad += usize::from(argmax(&softmax_confidence(&scaled).unwrap().0) != pred);
            let applied = condcal.apply(&logits, Some(feature)).unwrap();
            bad += usize::from(argmax(&applied.probs) != pred);
            bad
        })
        .sum();
    assert_eq!(violations, 0, "argmax changed on {violations} applications");
    pass(
        "criterion 8 (argmax preservation)",
        format!("ts/cts/rcmmc/ar-condcal on {n} samples, 0 violations"),
        started,
    );
}

// --- criterion 9 -----------------------------------------------------------

#[test]
fn criterion_09_bisection_accuracy_and_clip_accounting() {
    let started = Instant::now();
    let n = 100_000u64;
    let worst = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::derive(9009, StreamDomain::Synth, i);
            let k = 2 + rng.next_index(5);
            let logits: Vec<f64> = (0..k).map(|_| 2.0 * rng.next_normal()).collect();
            let (_, pred, _) = softmax_confidence(&logits).unwrap();
            let raw = rng.next_f64();
            let target = raw.clamp(1.0 / k as f64 + EPSILON, 1.0 - EPSILON);
            let solve = solve_temperature(&logits, pred, target).unwrap();
            (solve.achieved - target).abs()
        })
        .reduce(|| 0.0, f64::max);
    assert!(worst <= 1e-8, "max |achieved - target| = {worst:e}");

    // Clip accounting: applied clip events must equal the number of raw
    // kernel targets outside the projection range.
    let cal = softmax_cal_set(500, 4, 0.6, 9900);
    let calibrator = fit_nw_calibrator(
        &cal,
        NwFeature::Routing,
        0.25,
        BandwidthMode::ScottTimes(0.25),
    )
    .unwrap();
    let eval = softmax_cal_set(10_000, 4, 0.6, 9901);
    let mut stats = ClipStats::default();
    let mut expected_lower = 0u64;
    let mut expected_upper = 0u64;
    for s in &eval {
        let raw = nw_predict(&calibrator.model, s.conf, s.feature);
        if raw < 0.25 + EPSILON {
            expected_lower += 1;
        }
        if raw > 1.0 - EPSILON {
            expected_upper += 1;
        }
        let applied = calibrator.apply(&s.logits, s.feature).unwrap();
        stats.absorb(&applied);
    }
    assert_eq!(stats.lower, expected_lower);
    assert_eq!(stats.upper, expected_upper);
    assert_eq!(stats.total, eval.len() as u64);
    pass(
        "criterion 9 (bisection accuracy + clip accounting)",
        format!(
            "max |achieved - target| {worst:.2e} <= 1e-8 over {n} solves; clip events {} + {} match recount",
            stats.lower, stats.upper
        ),
        started,
    );
}

// --- criterion 10 ----------------------------------------------------------

#[test]
fn criterion_10_nw_consistency_trend() {
    let started = Instant::now();
    let sizes = [500usize, 2000, 8000];
    let grid: Vec<(f64, f64)> = (0..21)
        .flat_map(|i| {
            (0..21).map(move |j| (0.1 + 0.8 * i as f64 / 20.0, 0.1 + 0.8 * j as f64 / 20.0))
        })
        .collect();
    let monotone: usize = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let mses: Vec<f64> = sizes
                .iter()
                .map(|&n| {
                    let (c, r, t) = generate_smooth(n, 10_000 + seed);
                    let model = nw_fit(c, Some(r), t, 1.0, BandwidthMode::ScottTimes(1.0)).unwrap();
                    grid.iter()
                        .map(|&(cq, rq)| {
                            let g_hat = nw_predict(&model, cq, Some(rq));
                            let g = smooth_g_checked(cq, rq);
                            (g_hat - g) * (g_hat - g)
                        })
                        .sum::<f64>()
                        / grid.len() as f64
                })
                .collect();
            usize::from(mses[0] > mses[1] && mses[1] > mses[2])
        })
        .sum();
    assert!(
        monotone >= 9,
        "held-out MSE decreased monotonically in only {monotone}/10 seeds"
    );
    pass(
        "criterion 10 (kernel-regression consistency trend)",
        format!("MSE monotone over n in (500, 2000, 8000) in {monotone}/10 seeds"),
        started,
    );
}

fn smooth_g_checked(c: f64, r: f64) -> f64 {
    let g = smooth_g(c, r);
    assert!((0.0..=1.0).contains(&g));
    g
}

// --- criterion 11 ----------------------------------------------------------

fn probe_substrate(signal: bool, seed: u64) -> Dataset {
    let groups = if signal {
        vec![
            GroupSpec {
                weight: 0.5,
                r_mean: 0.25,
                r_sd: 0.05,
                offset: OffsetFn::Constant(-0.6),
            },
            GroupSpec {
                weight: 0.5,
                r_mean: 0.75,
                r_sd: 0.05,
                offset: OffsetFn::Zero,
            },
        ]
    } else {
        vec![
            GroupSpec {
                weight: 0.5,
                r_mean: 0.3,
                r_sd: 0.05,
                offset: OffsetFn::Zero,
            },
            GroupSpec {
                weight: 0.5,
                r_mean: 0.7,
                r_sd: 0.05,
                offset: OffsetFn::Zero,
            },
        ]
    };
    let spec = PlantedSubstrateSpec {
        n: 4000,
        class_count: 2,
        layer_count: 6,
        conf_beta: (1.0, 1.0),
        conf_range: if signal { (0.8, 0.9) } else { (0.55, 0.95) },
        groups,
        depth_std: 0.03,
        routing_axis: RoutingAxis::Mean,
        seed,
    };
    generate_planted(&spec).unwrap().0
}

#[test]
fn criterion_11_probe_audit_null_and_power() {
    let started = Instant::now();
    let config = ProbeConfig::default();
    let deltas = |signal: bool, base_seed: u64| -> Vec<f64> {
        (0..10u64)
            .into_par_iter()
            .map(|s| {
                let dataset = probe_substrate(signal, base_seed + s);
                let output = run_audit(&dataset, &config).unwrap();
                output.report.r2_full_mlp - output.report.r2_shuf_full_mlp
            })
            .collect()
    };
    let null_deltas = deltas(false, 11_000);
    let null_mean = null_deltas.iter().sum::<f64>() / null_deltas.len() as f64;
    assert!(
        null_mean.abs() < 0.03,
        "null |mean(full - shuf)| = {null_mean:.4} >= 0.03"
    );
    let signal_deltas = deltas(true, 11_500);
    let signal_mean = signal_deltas.iter().sum::<f64>() / signal_deltas.len() as f64;
    assert!(
        signal_mean > 0.1,
        "planted-signal mean(full - shuf) = {signal_mean:.4} <= 0.1"
    );
    pass(
        "criterion 11 (probe-audit shuffled-routing control)",
        format!(
            "null mean delta {null_mean:.4} (<0.03 abs), planted-signal mean delta {signal_mean:.3} (>0.1), 10 seeds each"
        ),
        started,
    );
}

// --- criterion 12 ----------------------------------------------------------

#[test]
fn criterion_12_mlp_gradient_check() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for point in 0..10u64 {
        let mut data_rng = RngStream::derive(12_012, StreamDomain::Synth, point);
        let d = 1 + data_rng.next_index(7);
        let x: Vec<Vec<f64>> = (0..32)
            .map(|_| (0..d).map(|_| data_rng.next_f64()).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|row| row.iter().sum::<f64>() / d as f64 + 0.1 * data_rng.next_normal())
            .collect();
        let mut init = RngStream::derive(12_012, StreamDomain::ProbeInit, point);
        let mut model = Mlp::init(d, 16, &mut init);
        let grad = model.grad(&x, &y);
        let h = 1e-5;
        for i in 0..model.params.len() {
            let orig = model.params[i];
            model.params[i] = orig + h;
            let up = model.loss(&x, &y);
            model.params[i] = orig - h;
            let down = model.loss(&x, &y);
            model.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = grad[i].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(((grad[i] - fd) / denom).abs());
        }
    }
    assert!(worst < 1e-4, "max relative gradient error = {worst:e}");
    pass(
        "criterion 12 (MLP gradient check)",
        format!("10 random parameter points, max relative error {worst:.2e} < 1e-4"),
        started,
    );
}

// --- criterion 13 lives in the CLI crate (determinism of emitted reports) --

// --- criterion 14 ----------------------------------------------------------

#[test]
fn criterion_14_scott_bandwidth_exact() {
    let started = Instant::now();
    let h = scott_bandwidth(1.0, 64, 2);
    assert_eq!(h, 0.5, "sigma 1, n 64, m 2 must give exactly 0.5");
    pass(
        "criterion 14 (plug-in bandwidth)",
        "sigma = 1, n = 64, m = 2 gives h = 0.5 exactly".into(),
        started,
    );
}

// --- criterion 15 ----------------------------------------------------------

/// Exhaustive monotone least squares: enumerate all consecutive-block
/// partitions, keep the monotone ones, take the SSE argmin.
fn exhaustive_monotone_fit(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0..(1u32 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        let mut prev = f64::NEG_INFINITY;
        let mut monotone = true;
        for end in 0..n {
            if end == n - 1 || (mask >> end) & 1 == 1 {
                let mean: f64 = y[start..=end].iter().sum::<f64>() / (end - start + 1) as f64;
                if mean < prev {
                    monotone = false;
                    break;
                }
                prev = mean;
                fit.extend(std::iter::repeat_n(mean, end - start + 1));
                start = end + 1;
            }
        }
        if !monotone {
            continue;
        }
        let sse: f64 = fit.iter().zip(y).map(|(f, t)| (f - t) * (f - t)).sum();
        if best.as_ref().is_none_or(|(s, _)| sse < *s - 1e-15) {
            best = Some((sse, fit));
        }
    }
    best.unwrap().1
}

#[test]
fn criterion_15_isotonic_oracle() {
    let started = Instant::now();
    let confs: Vec<f64> = (0..8).map(|i| 0.1 + 0.1 * i as f64).collect();
    let mut worst: f64 = 0.0;
    for pattern in 0u32..256 {
        let pairs: Vec<(f64, f64)> = confs
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, f64::from((pattern >> i) & 1)))
            .collect();
        let model = calkit_core::calibrate::isotonic_fit(&pairs).unwrap();
        let targets: Vec<f64> = pairs.iter().map(|&(_, t)| t).collect();
        let expected = exhaustive_monotone_fit(&targets);
        for ((c, _), want) in pairs.iter().zip(&expected) {
            worst = worst.max((model.predict(*c) - want).abs());
        }
    }
    assert!(worst < 1e-12, "max |pava - exhaustive| = {worst:e}");
    pass(
        "criterion 15 (isotonic oracle)",
        format!("all 256 correctness patterns at n = 8, max deviation {worst:.2e} < 1e-12"),
        started,
    );
}
