use std::io::Write;
use std::path::Path;

use serde::Serialize;

use calkit_core::calibrate::{fit, BandwidthMode, ClipStats, FitOptions, FittedCalibrator, Method};
use calkit_core::data::SplitSpec;
use calkit_core::features::FeatureKind;
use calkit_core::{io, Result};

use crate::commands::split_samples;
use crate::config::Resolved;
use crate::report::Report;

#[derive(Serialize)]
struct CalibrateSummary {
    method: String,
    bw_mode: String,
    feature: String,
    n_cal: usize,
    n_test: usize,
    clip_lower_rate: f64,
    clip_upper_rate: f64,
    clip: ClipStats,
    model: FittedCalibrator,
}

pub fn run(
    input: &Path,
    method: &str,
    bw_mode: Option<&str>,
    feature: Option<&str>,
    cal_fraction: Option<f64>,
    bins: Option<usize>,
    resolved: &Resolved,
) -> Result<()> {
    let mut resolved = resolved.clone();
    let method =
        Method::parse(&resolved.value("method", Some(method.to_string()), "ts".into())?)?;
    let bw_name = resolved.value("bw_mode", bw_mode.map(String::from), "scott".into())?;
    let bw = BandwidthMode::parse(&bw_name)?;
    let feature_name = resolved.value("feature", feature.map(String::from), "r_std".into())?;
    let kind = FeatureKind::parse(&feature_name)?;
    let bins = resolved.value("bins", bins, 15usize)?;
    let cal_fraction = resolved.value("cal_fraction", cal_fraction, 0.5f64)?;

    let dataset = io::read_auto(input)?;
    let spec = SplitSpec {
        seed: resolved.seed,
        cal_fraction,
    };
    let (cal, test) = split_samples(&dataset, &spec, Some(&kind))?;
    let options = FitOptions {
        bin_count: bins,
        bandwidth: bw,
        seed: resolved.seed,
        oracle_test: if bw == BandwidthMode::OracleEce {
            Some(test.clone())
        } else {
            None
        },
        ..Default::default()
    };
    let fitted = fit(method, &cal, &options)?;
    let (probs, clip) = fitted.apply_all(&test)?;

    resolved.ensure_out_dir()?;
    let jsonl_path = resolved.out_path("calibrated.jsonl");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&jsonl_path)?);
    // Test-half record ids follow the split order.
    let (_, test_idx) = calkit_core::data::split_indices(dataset.len(), &spec)?;
    for (i, p) in test_idx.iter().zip(&probs) {
        let record = &dataset.records()[*i];
        let line = serde_json::json!({
            "id": record.id,
            "label": record.label,
            "probs": p,
        });
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    let summary = CalibrateSummary {
        method: method.name().into(),
        bw_mode: bw_name,
        feature: feature_name,
        n_cal: cal.len(),
        n_test: test.len(),
        clip_lower_rate: clip.lower_rate(),
        clip_upper_rate: clip.upper_rate(),
        clip,
        model: fitted,
    };
    let report = Report::new("calibrate", Some(input), resolved.echo.clone(), &summary)?;
    let path = resolved.out_path("calibrate_model.json");
    report.write(&path)?;
    println!(
        "fitted {} on {} samples; calibrated {} test samples (clip rates {:.5} / {:.5})",
        summary.method,
        summary.n_cal,
        summary.n_test,
        summary.clip_lower_rate,
        summary.clip_upper_rate
    );
    println!("wrote {} and {}", path.display(), jsonl_path.display());
    Ok(())
}
