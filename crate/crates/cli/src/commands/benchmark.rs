use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use calkit_core::calibrate::{fit, ClipStats, FitOptions, Method};
use calkit_core::data::SplitSpec;
use calkit_core::features::FeatureKind;
use calkit_core::metrics::{
    acc1, brier, classwise_ece, compute_report, conf_correct, ece, mce, nll, smooth_ece,
    BinningSpec, MetricReport, TertileSplit,
};
use calkit_core::rng::{RngStream, StreamDomain};
use calkit_core::stats::quantile_sorted;
use calkit_core::{io, Result};

use crate::commands::split_samples;
use crate::config::Resolved;
use crate::report::{fmt_f64, fmt_opt, write_csv, Report};

const CI_METRICS: [&str; 9] = [
    "ece",
    "adaece",
    "mce",
    "classwise_ece",
    "smooth_ece",
    "nll",
    "brier",
    "acc1",
    "worst_tertile_ece",
];

#[derive(Serialize)]
struct BenchmarkRow {
    method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_acc1: Option<f64>,
    /// 95% percentile bootstrap interval per metric.
    ci: BTreeMap<String, (f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clip: Option<ClipStats>,
    /// Replicates whose resample emptied a tertile (worst-tertile draws
    /// skipped there).
    tertile_skipped: usize,
}

/// Cached per-method state shared by the replicate loop.
struct MethodEval {
    probs: Vec<Vec<f64>>,
    samples: Vec<(f64, bool)>,
    smooth_sigma: f64,
}

pub fn run(
    input: &Path,
    bins: Option<usize>,
    bootstrap: Option<usize>,
    feature: Option<&str>,
    resolved: &Resolved,
) -> Result<()> {
    let mut resolved = resolved.clone();
    let bins = resolved.value("bins", bins, 15usize)?;
    let b = resolved.value("bootstrap", bootstrap, 500usize)?;
    let feature_name = resolved.value("feature", feature.map(String::from), "r_std".into())?;
    let kind = FeatureKind::parse(&feature_name)?;
    let cal_fraction = resolved.value("cal_fraction", None::<f64>, 0.5f64)?;

    let dataset = io::read_auto(input)?;
    let spec = SplitSpec {
        seed: resolved.seed,
        cal_fraction,
    };
    let (cal, test) = split_samples(&dataset, &spec, Some(&kind))?;
    let labels: Vec<usize> = test.iter().map(|s| s.label).collect();
    let has_routing = dataset.has_routing();
    let rho: Option<Vec<f64>> = if has_routing {
        Some(test.iter().map(|s| s.feature.unwrap()).collect())
    } else {
        None
    };
    // Tertile cuts on the test half, reused by every bootstrap replicate.
    let cuts = rho.as_ref().and_then(|rho| {
        TertileSplit::from_feature(rho)
            .ok()
            .map(|s| (s.q_low, s.q_high))
    });
    if has_routing && cuts.is_none() {
        println!("notice: routing feature is degenerate; worst-tertile metrics skipped");
    }
    let rho_for_report = match (&rho, cuts) {
        (Some(r), Some(_)) => Some(r.as_slice()),
        _ => None,
    };

    let options = FitOptions {
        bin_count: bins,
        seed: resolved.seed,
        ..Default::default()
    };
    let mut rows: Vec<BenchmarkRow> = Vec::new();
    let mut evals: Vec<(usize, MethodEval)> = Vec::new(); // row index -> cache
    let mut baseline_acc: Option<f64> = None;
    for method in Method::ALL {
        if method.needs_routing() && !has_routing {
            println!("notice: {} skipped (no routing data)", method.name());
            rows.push(BenchmarkRow {
                method: method.name().into(),
                skipped: Some("no routing data".into()),
                metrics: None,
                delta_acc1: None,
                ci: BTreeMap::new(),
                clip: None,
                tertile_skipped: 0,
            });
            continue;
        }
        let fitted = fit(method, &cal, &options)?;
        let (probs, clip) = fitted.apply_all(&test)?;
        let point = compute_report(&probs, &labels, rho_for_report, bins)?;
        if method == Method::NoCalibration {
            baseline_acc = Some(point.acc1);
        }
        let delta_acc1 = baseline_acc.map(|base| point.acc1 - base);
        let samples = conf_correct(&probs, &labels);
        evals.push((
            rows.len(),
            MethodEval {
                probs,
                samples,
                smooth_sigma: point.smooth_ece_sigma,
            },
        ));
        rows.push(BenchmarkRow {
            method: method.name().into(),
            skipped: None,
            metrics: Some(point),
            delta_acc1,
            ci: BTreeMap::new(),
            clip: matches!(
                method,
                Method::NwConf | Method::NwPredEntropy | Method::ArCondCal
            )
            .then_some(clip),
            tertile_skipped: 0,
        });
    }

    // Shared resample indices per replicate; every method sees the same
    // draw, and replicate r depends only on stream r.
    let n = test.len();
    let width = BinningSpec::equal_width(bins);
    let mass = BinningSpec::equal_mass(bins);
    let mce_spec = BinningSpec {
        min_support: 5,
        ..width
    };
    let replicate_values: Vec<Vec<[Option<f64>; 9]>> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = RngStream::derive(resolved.seed, StreamDomain::Bootstrap, rep);
            let indices: Vec<usize> = (0..n).map(|_| rng.next_index(n)).collect();
            let labels_rep: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
            let rho_rep: Option<Vec<f64>> = rho
                .as_ref()
                .map(|r| indices.iter().map(|&i| r[i]).collect());
            evals
                .iter()
                .map(|(_, eval)| {
                    replicate_metrics(
                        eval,
                        &indices,
                        &labels_rep,
                        rho_rep.as_deref(),
                        cuts,
                        &width,
                        &mass,
                        &mce_spec,
                    )
                })
                .collect()
        })
        .collect();

    // Percentile CIs per (method, metric).
    for (pos, (row_idx, _)) in evals.iter().enumerate() {
        let mut ci = BTreeMap::new();
        let mut tertile_skipped = 0usize;
        for (m, name) in CI_METRICS.iter().enumerate() {
            let mut draws: Vec<f64> = replicate_values
                .iter()
                .filter_map(|rep| rep[pos][m])
                .collect();
            if *name == "worst_tertile_ece" {
                tertile_skipped = b - draws.len();
                if cuts.is_none() {
                    continue;
                }
            }
            if draws.is_empty() {
                continue;
            }
            draws.sort_by(f64::total_cmp);
            ci.insert(
                name.to_string(),
                (
                    quantile_sorted(&draws, 0.025),
                    quantile_sorted(&draws, 0.975),
                ),
            );
        }
        rows[*row_idx].ci = ci;
        rows[*row_idx].tertile_skipped = tertile_skipped;
    }

    resolved.ensure_out_dir()?;
    let mut csv_rows = Vec::new();
    for row in &rows {
        let mut cells = vec![row.method.clone()];
        match &row.metrics {
            None => cells.extend(std::iter::repeat_n(String::new(), CI_METRICS.len() * 3 + 1)),
            Some(m) => {
                let values = [
                    Some(m.ece),
                    Some(m.adaece),
                    Some(m.mce),
                    Some(m.classwise_ece),
                    Some(m.smooth_ece),
                    Some(m.nll),
                    Some(m.brier),
                    Some(m.acc1),
                    m.worst_tertile_ece,
                ];
                for (value, name) in values.iter().zip(CI_METRICS) {
                    cells.push(fmt_opt(*value));
                    match row.ci.get(name) {
                        Some(&(lo, hi)) => {
                            cells.push(fmt_f64(lo));
                            cells.push(fmt_f64(hi));
                        }
                        None => {
                            cells.push(String::new());
                            cells.push(String::new());
                        }
                    }
                }
                cells.push(fmt_opt(row.delta_acc1));
            }
        }
        csv_rows.push(cells);
    }
    let header: String = std::iter::once("method".to_string())
        .chain(
            CI_METRICS
                .iter()
                .flat_map(|m| [m.to_string(), format!("{m}_lo"), format!("{m}_hi")]),
        )
        .chain(std::iter::once("delta_acc1".to_string()))
        .collect::<Vec<_>>()
        .join(",");
    write_csv(&resolved.out_path("benchmark.csv"), &header, &csv_rows)?;

    let report = Report::new("benchmark", Some(input), resolved.echo.clone(), &rows)?;
    let path = resolved.out_path("benchmark.json");
    report.write(&path)?;
    for row in &rows {
        match &row.metrics {
            Some(m) => println!(
                "{:<11} ece {:.4}  adaece {:.4}  nll {:.4}  worst-tertile {}  dAcc@1 {:+.4}",
                row.method,
                m.ece,
                m.adaece,
                m.nll,
                m.worst_tertile_ece
                    .map_or("n/a".into(), |v| format!("{v:.4}")),
                row.delta_acc1.unwrap_or(0.0),
            ),
            None => println!("{:<11} skipped", row.method),
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn replicate_metrics(
    eval: &MethodEval,
    indices: &[usize],
    labels: &[usize],
    rho: Option<&[f64]>,
    cuts: Option<(f64, f64)>,
    width: &BinningSpec,
    mass: &BinningSpec,
    mce_spec: &BinningSpec,
) -> [Option<f64>; 9] {
    let samples: Vec<(f64, bool)> = indices.iter().map(|&i| eval.samples[i]).collect();
    let probs: Vec<Vec<f64>> = indices.iter().map(|&i| eval.probs[i].clone()).collect();
    let worst = match (rho, cuts) {
        (Some(rho), Some((q_low, q_high))) => {
            let split = TertileSplit::with_cuts(rho, q_low, q_high);
            let sets = split.sets();
            if sets.iter().any(|s| s.is_empty()) {
                None
            } else {
                let mut worst = f64::NEG_INFINITY;
                for set in sets {
                    let subset: Vec<(f64, bool)> = set.iter().map(|&i| samples[i]).collect();
                    worst = worst.max(ece(&subset, width).unwrap_or(f64::NAN));
                }
                worst.is_finite().then_some(worst)
            }
        }
        _ => None,
    };
    [
        ece(&samples, width).ok(),
        ece(&samples, mass).ok(),
        mce(&samples, mce_spec).ok(),
        classwise_ece(&probs, labels, width).ok(),
        smooth_ece(&samples, Some(eval.smooth_sigma))
            .ok()
            .map(|s| s.value),
        nll(&probs, labels).ok(),
        brier(&probs, labels).ok(),
        acc1(&probs, labels).ok(),
        worst,
    ]
}
