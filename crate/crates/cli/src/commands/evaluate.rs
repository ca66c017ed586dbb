use std::path::Path;

use calkit_core::data::softmax_confidence;
use calkit_core::features::{feature_column, FeatureKind};
use calkit_core::metrics::{
    compute_report, conf_correct, reliability_table, BinningSpec, TertileSplit,
};
use calkit_core::{io, Result};

use crate::config::Resolved;
use crate::report::{fmt_f64, write_csv, Report};

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
    let mut probs = Vec::with_capacity(dataset.len());
    let mut labels = Vec::with_capacity(dataset.len());
    for record in dataset.records() {
        let (p, _, _) = softmax_confidence(&record.logits)?;
        probs.push(p);
        labels.push(record.label);
    }
    let rho = if dataset.has_routing() || !kind.needs_routing() {
        Some(feature_column(&dataset, &kind)?)
    } else {
        None
    };
    let metric_report = match compute_report(&probs, &labels, rho.as_deref(), bins) {
        Err(calkit_core::Error::Degenerate(msg)) => {
            println!("notice: {msg}; worst-tertile metrics skipped");
            compute_report(&probs, &labels, None, bins)?
        }
        other => other?,
    };

    resolved.ensure_out_dir()?;
    let spec = BinningSpec::equal_width(bins);
    let samples = conf_correct(&probs, &labels);
    let table_rows = |subset: &[(f64, bool)]| -> Result<Vec<Vec<String>>> {
        Ok(reliability_table(subset, &spec)?
            .iter()
            .map(|b| {
                vec![
                    fmt_f64(b.bin_lo),
                    fmt_f64(b.bin_hi),
                    b.n.to_string(),
                    fmt_f64(b.acc),
                    fmt_f64(b.conf),
                ]
            })
            .collect())
    };
    let header = "bin_lo,bin_hi,n,acc,conf";
    write_csv(
        &resolved.out_path("reliability_global.csv"),
        header,
        &table_rows(&samples)?,
    )?;
    if let Some(rho) = &rho {
        if let Ok(split) = TertileSplit::from_feature(rho) {
            for (name, set) in [
                ("low", &split.low),
                ("mid", &split.mid),
                ("high", &split.high),
            ] {
                let subset: Vec<(f64, bool)> = set.iter().map(|&i| samples[i]).collect();
                write_csv(
                    &resolved.out_path(&format!("reliability_tertile_{name}.csv")),
                    header,
                    &table_rows(&subset)?,
                )?;
            }
        }
    }
    let report = Report::new(
        "evaluate",
        Some(input),
        resolved.echo.clone(),
        &metric_report,
    )?;
    let path = resolved.out_path("evaluate.json");
    report.write(&path)?;
    println!(
        "ece {:.4}  adaece {:.4}  nll {:.4}  acc1 {:.4}{}",
        metric_report.ece,
        metric_report.adaece,
        metric_report.nll,
        metric_report.acc1,
        match metric_report.worst_tertile_ece {
            Some(w) => format!("  worst-tertile {w:.4}"),
            None => "  (no routing feature: worst-tertile skipped)".into(),
        }
    );
    println!("wrote {}", path.display());
    Ok(())
}
