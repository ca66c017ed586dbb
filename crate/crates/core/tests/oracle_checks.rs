//! Generator-backed statistical checks that complement the acceptance
//! criteria: null-coverage of the permutation quantile, generator
//! self-consistency, root-n convergence of the sampled shrinkage gap, and a
//! bandwidth sweep on a null substrate.

use rayon::prelude::*;

use calkit_core::calibrate::{
    fit_nw_calibrator, select_bandwidth, BandwidthMode, CalSample, NwFeature,
};
use calkit_core::data::{softmax_confidence, SplitSpec};
use calkit_core::diagnostics::{
    bootstrap_ci, matched_confidence_curves, max_gap, permutation_test, DiagnosticsConfig,
    GapStatistic,
};
use calkit_core::metrics::{conf_correct, ece, worst_tertile_ece, BinningSpec, TertileSplit};
use calkit_core::probe::fit_ridge;
use calkit_core::rng::{RngStream, StreamDomain};
use calkit_core::synth::{generate_planted, sampled_prop4_gap, PlantedSubstrateSpec, TwoGroupSpec};
use calkit_core::Dataset;

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

#[test]
fn null_max_gap_stays_below_permutation_quantile() {
    // With no planted gap, the observed max gap should clear the null's
    // 97.5th percentile only rarely.
    let trials = 50u64;
    let below: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let spec = PlantedSubstrateSpec::two_group(10_000, 2, 1, 0.0, (0.6, 0.8), 4400 + t);
            let (dataset, truth) = generate_planted(&spec).unwrap();
            let samples = scored(&dataset);
            let curves = matched_confidence_curves(&samples, &truth.routing, 15, 5).unwrap();
            let observed = max_gap(&curves).unwrap();
            let config = DiagnosticsConfig {
                permutations: 400,
                seed: 4400 + t,
                ..Default::default()
            };
            let result = permutation_test(
                &samples,
                &truth.routing,
                (curves.q_low, curves.q_high),
                GapStatistic::MaxGap,
                observed,
                &config,
            )
            .unwrap();
            usize::from(observed < result.null_q975)
        })
        .sum();
    assert!(
        below * 10 >= trials as usize * 9,
        "max gap below null q97.5 in only {below}/{trials} null trials"
    );
}

#[test]
fn planted_generator_matches_its_own_conditional_accuracy() {
    // Per-(confidence-decile, group) cell, the empirical accuracy must sit
    // within binomial noise of the planted conditional mean.
    let spec = PlantedSubstrateSpec::two_group(100_000, 2, 1, 0.2, (0.6, 0.8), 555);
    let (dataset, truth) = generate_planted(&spec).unwrap();
    let samples = scored(&dataset);
    let mut hits = vec![(0usize, 0usize, 0.0f64); 20]; // correct, n, eta sum
    for (i, &(conf, correct)) in samples.iter().enumerate() {
        let decile = (((conf - 0.52) / (0.97 - 0.52) * 10.0) as usize).min(9);
        let cell = decile * 2 + truth.group[i];
        hits[cell].0 += correct as usize;
        hits[cell].1 += 1;
        hits[cell].2 += truth.eta[i];
    }
    for (cell, &(correct, n, eta_sum)) in hits.iter().enumerate() {
        if n < 50 {
            continue;
        }
        let eta = eta_sum / n as f64;
        let se = (eta * (1.0 - eta) / n as f64).sqrt();
        let z = (correct as f64 / n as f64 - eta) / se;
        assert!(
            z.abs() < 4.0,
            "cell {cell}: empirical accuracy off by z = {z:.2}"
        );
    }
}

#[test]
fn sampled_shrinkage_gap_converges_at_root_n() {
    let spec_for = |n: usize| TwoGroupSpec {
        d: 0.2,
        f_minus: 0.8,
        f_plus: 0.3,
        h: 0.1,
        n,
    };
    let analytic = (0.8 - 0.3) * (0.2f64 * 0.2 / (4.0 * 0.1 * 0.1)).tanh();
    let rmse_at = |n: usize, seed_base: u64| -> f64 {
        let total: f64 = (0..200u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::derive(seed_base, StreamDomain::Synth, i);
                let gap = sampled_prop4_gap(&spec_for(n), &mut rng).unwrap();
                (gap - analytic) * (gap - analytic)
            })
            .sum();
        (total / 200.0).sqrt()
    };
    let errors = [rmse_at(250, 10), rmse_at(1000, 11), rmse_at(4000, 12)];
    for pair in errors.windows(2) {
        let ratio = pair[1] / pair[0];
        // Quadrupling n should roughly halve the error band.
        assert!(
            (0.3..=0.7).contains(&ratio),
            "error ratio {ratio:.3} outside [0.3, 0.7]; errors {errors:?}"
        );
    }
}

#[test]
fn full_ridge_training_sse_never_worse_than_conf_only() {
    let mut rng = RngStream::derive(66, StreamDomain::Synth, 0);
    let n = 500;
    let x_full: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..5).map(|_| rng.next_f64()).collect())
        .collect();
    let y: Vec<f64> = x_full
        .iter()
        .map(|row| 0.4 * row[0] + 0.2 * row[2] + 0.05 * rng.next_normal())
        .collect();
    let x_conf: Vec<Vec<f64>> = x_full.iter().map(|row| vec![row[0]]).collect();
    let lambda = 1e-3;
    let sse = |x: &[Vec<f64>], w: &[f64]| -> f64 {
        x.iter()
            .zip(&y)
            .map(|(row, &target)| {
                let pred = w[0] + w[1..].iter().zip(row).map(|(wi, v)| wi * v).sum::<f64>();
                (pred - target) * (pred - target)
            })
            .sum()
    };
    let w_conf = fit_ridge(&x_conf, &y, lambda).unwrap();
    let w_full = fit_ridge(&x_full, &y, lambda).unwrap();
    assert!(sse(&x_full, &w_full) <= sse(&x_conf, &w_conf) + 1e-9);
}

#[test]
fn constant_statistic_gives_degenerate_ci() {
    // Identical accuracy in both tertiles at every bin: every bootstrap
    // replicate produces gap 0 exactly.
    let mut samples = Vec::new();
    let mut rho = Vec::new();
    for i in 0..600 {
        samples.push((0.55 + 0.4 * ((i % 10) as f64 / 10.0), true));
        rho.push((i % 3) as f64 + (i as f64 / 600.0));
    }
    let curves = matched_confidence_curves(&samples, &rho, 15, 5).unwrap();
    let config = DiagnosticsConfig {
        bootstrap: 200,
        ..Default::default()
    };
    let result = bootstrap_ci(&samples, &rho, (curves.q_low, curves.q_high), &config).unwrap();
    assert_eq!(result.max_gap_ci, (0.0, 0.0));
    assert_eq!(result.wt_gap_ci, (0.0, 0.0));
}

#[test]
fn bandwidth_sweep_on_null_substrate_moves_worst_tertile_little() {
    // On a no-gap substrate the five bandwidth modes should agree on
    // worst-tertile ECE to within roughly the resampling noise of the
    // statistic itself (bootstrapped on the same test half).
    let spec = PlantedSubstrateSpec {
        depth_std: 0.0,
        routing_axis: calkit_core::synth::RoutingAxis::Spread,
        ..PlantedSubstrateSpec::two_group(6000, 2, 4, 0.0, (0.6, 0.8), 808)
    };
    let (dataset, _) = generate_planted(&spec).unwrap();
    let split_spec = SplitSpec {
        seed: 42,
        cal_fraction: 0.5,
    };
    let column =
        calkit_core::features::feature_column(&dataset, &calkit_core::FeatureKind::DepthVariance)
            .unwrap();
    let (cal_idx, test_idx) = calkit_core::data::split_indices(dataset.len(), &split_spec).unwrap();
    let gather = |idx: &[usize]| -> Vec<CalSample> {
        idx.iter()
            .map(|&i| CalSample::from_record(&dataset.records()[i], Some(column[i])).unwrap())
            .collect()
    };
    let cal = gather(&cal_idx);
    let test = gather(&test_idx);
    let labels: Vec<usize> = test.iter().map(|s| s.label).collect();
    let rho: Vec<f64> = test.iter().map(|s| s.feature.unwrap()).collect();
    let width = BinningSpec::equal_width(15);

    let modes = [
        BandwidthMode::ScottTimes(0.5),
        BandwidthMode::ScottTimes(1.0),
        BandwidthMode::ScottTimes(2.0),
        BandwidthMode::CvNll,
        BandwidthMode::OracleEce,
    ];
    let mut worst_values = Vec::new();
    let mut condcal_samples = None;
    for mode in modes {
        let mult = select_bandwidth(&cal, NwFeature::Routing, mode, 42, Some(&test)).unwrap();
        let calibrator = fit_nw_calibrator(&cal, NwFeature::Routing, mult, mode).unwrap();
        let probs: Vec<Vec<f64>> = test
            .iter()
            .map(|s| calibrator.apply(&s.logits, s.feature).unwrap().probs)
            .collect();
        let samples = conf_correct(&probs, &labels);
        let (worst, _, _) = worst_tertile_ece(&samples, &rho, &width).unwrap();
        worst_values.push(worst);
        if mode == BandwidthMode::ScottTimes(1.0) {
            condcal_samples = Some(samples);
        }
    }
    let spread = worst_values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        - worst_values.iter().cloned().fold(f64::INFINITY, f64::min);

    // Bootstrap CI width of the default-bandwidth worst-tertile statistic,
    // cuts held fixed, as the noise scale.
    let samples = condcal_samples.unwrap();
    let cuts = TertileSplit::from_feature(&rho).unwrap();
    let draws: Vec<f64> = (0..300u64)
        .into_par_iter()
        .filter_map(|rep| {
            let mut rng = RngStream::derive(909, StreamDomain::Bootstrap, rep);
            let n = samples.len();
            let idx: Vec<usize> = (0..n).map(|_| rng.next_index(n)).collect();
            let s: Vec<(f64, bool)> = idx.iter().map(|&i| samples[i]).collect();
            let r: Vec<f64> = idx.iter().map(|&i| rho[i]).collect();
            let split = TertileSplit::with_cuts(&r, cuts.q_low, cuts.q_high);
            if split.sets().iter().any(|set| set.is_empty()) {
                return None;
            }
            let mut worst = f64::NEG_INFINITY;
            for set in split.sets() {
                let subset: Vec<(f64, bool)> = set.iter().map(|&i| s[i]).collect();
                worst = worst.max(ece(&subset, &width).unwrap());
            }
            Some(worst)
        })
        .collect();
    let mut sorted = draws.clone();
    sorted.sort_by(f64::total_cmp);
    let ci_width = calkit_core::stats::quantile_sorted(&sorted, 0.975)
        - calkit_core::stats::quantile_sorted(&sorted, 0.025);
    assert!(
        spread < 2.0 * ci_width,
        "cross-mode worst-tertile spread {spread:.4} vs CI width {ci_width:.4}"
    );
}
