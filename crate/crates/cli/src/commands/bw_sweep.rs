use std::path::Path;

use serde::Serialize;

use calkit_core::calibrate::{fit_nw_calibrator, select_bandwidth, BandwidthMode, NwFeature};
use calkit_core::data::SplitSpec;
use calkit_core::features::FeatureKind;
use calkit_core::metrics::{conf_correct, ece, nll, worst_tertile_ece, BinningSpec};
use calkit_core::{io, Error, Result};

use crate::commands::split_samples;
use crate::config::Resolved;
use crate::report::{fmt_f64, write_csv, Report};

#[derive(Serialize)]
struct SweepRow {
    mode: String,
    multiplier: f64,
    ece: f64,
    worst_tertile_ece: f64,
    nll: f64,
    diagnostic_only: bool,
}

pub fn run(
    input: &Path,
    feature: Option<&str>,
    bins: Option<usize>,
    resolved: &Resolved,
) -> Result<()> {
    let mut resolved = resolved.clone();
    let bins = resolved.value("bins", bins, 15usize)?;
    let feature_name = resolved.value("feature", feature.map(String::from), "r_std".into())?;
    let kind = FeatureKind::parse(&feature_name)?;
    let dataset = io::read_auto(input)?;
    if !dataset.has_routing() {
        return Err(Error::invalid("bandwidth sweep needs routing profiles"));
    }
    let spec = SplitSpec {
        seed: resolved.seed,
        cal_fraction: 0.5,
    };
    let (cal, test) = split_samples(&dataset, &spec, Some(&kind))?;
    let labels: Vec<usize> = test.iter().map(|s| s.label).collect();
    let rho: Vec<f64> = test.iter().map(|s| s.feature.unwrap()).collect();
    let width = BinningSpec::equal_width(bins);

    let modes = [
        BandwidthMode::ScottTimes(0.5),
        BandwidthMode::ScottTimes(1.0),
        BandwidthMode::ScottTimes(2.0),
        BandwidthMode::CvNll,
        BandwidthMode::OracleEce,
    ];
    let mut rows = Vec::with_capacity(modes.len());
    for mode in modes {
        let multiplier =
            select_bandwidth(&cal, NwFeature::Routing, mode, resolved.seed, Some(&test))?;
        let calibrator = fit_nw_calibrator(&cal, NwFeature::Routing, multiplier, mode)?;
        let probs: Vec<Vec<f64>> = test
            .iter()
            .map(|s| Ok(calibrator.apply(&s.logits, s.feature)?.probs))
            .collect::<Result<_>>()?;
        let samples = conf_correct(&probs, &labels);
        let (worst, _, _) = worst_tertile_ece(&samples, &rho, &width)?;
        rows.push(SweepRow {
            mode: mode.name(),
            multiplier,
            ece: ece(&samples, &width)?,
            worst_tertile_ece: worst,
            nll: nll(&probs, &labels)?,
            diagnostic_only: mode == BandwidthMode::OracleEce,
        });
    }

    resolved.ensure_out_dir()?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.mode.clone(),
                fmt_f64(r.multiplier),
                fmt_f64(r.ece),
                fmt_f64(r.worst_tertile_ece),
                fmt_f64(r.nll),
                r.diagnostic_only.to_string(),
            ]
        })
        .collect();
    write_csv(
        &resolved.out_path("bw_sweep.csv"),
        "mode,multiplier,ece,worst_tertile_ece,nll,diagnostic_only",
        &csv_rows,
    )?;
    let report = Report::new("bw-sweep", Some(input), resolved.echo.clone(), &rows)?;
    let path = resolved.out_path("bw_sweep.json");
    report.write(&path)?;
    for r in &rows {
        println!(
            "{:<11} mult {:<4} ece {:.4}  worst-tertile {:.4}  nll {:.4}{}",
            r.mode,
            r.multiplier,
            r.ece,
            r.worst_tertile_ece,
            r.nll,
            if r.diagnostic_only {
                "  [diagnostic-only]"
            } else {
                ""
            }
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}
