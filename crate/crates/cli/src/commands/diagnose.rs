use std::path::Path;

use calkit_core::diagnostics::{run_protocol, DiagnosticsConfig};
use calkit_core::features::FeatureKind;
use calkit_core::{io, Result};

use crate::config::Resolved;
use crate::report::{fmt_f64, write_csv, Report};

pub fn run(
    input: &Path,
    feature: Option<&str>,
    bins: Option<usize>,
    min_support: Option<usize>,
    bootstrap: Option<usize>,
    perm: Option<usize>,
    resolved: &Resolved,
) -> Result<()> {
    let mut resolved = resolved.clone();
    let feature_name = resolved.value("feature", feature.map(String::from), "r_agg".into())?;
    let config = DiagnosticsConfig {
        feature: FeatureKind::parse(&feature_name)?,
        bin_count: resolved.value("bins", bins, 15usize)?,
        min_support: resolved.value("min_support", min_support, 5usize)?,
        bootstrap: resolved.value("bootstrap", bootstrap, 5000usize)?,
        permutations: resolved.value("perm", perm, 5000usize)?,
        seed: resolved.seed,
    };
    let dataset = io::read_auto(input)?;
    let output = run_protocol(&dataset, &config)?;

    resolved.ensure_out_dir()?;
    // Accuracy-vs-confidence curve per tertile (plot panel a).
    let mut rows = Vec::new();
    let curves = &output.curves;
    for (tertile, stats) in [
        ("low", &curves.low),
        ("mid", &curves.mid),
        ("high", &curves.high),
    ] {
        for (b, stat) in stats.iter().enumerate() {
            rows.push(vec![
                tertile.to_string(),
                b.to_string(),
                fmt_f64(b as f64 / curves.bin_count as f64),
                fmt_f64((b + 1) as f64 / curves.bin_count as f64),
                stat.n.to_string(),
                fmt_f64(stat.acc),
                (stat.n >= curves.min_support).to_string(),
                curves.shared.contains(&b).to_string(),
            ]);
        }
    }
    write_csv(
        &resolved.out_path("diagnose_curves.csv"),
        "tertile,bin,bin_lo,bin_hi,n,acc,valid,shared",
        &rows,
    )?;

    // Feature histogram (plot panel b), 30 equal-width bins over the range.
    let (lo, hi) = output
        .rho
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let nbins = 30usize;
    let width = if hi > lo {
        (hi - lo) / nbins as f64
    } else {
        1.0
    };
    let mut counts = vec![0usize; nbins];
    for &v in &output.rho {
        let idx = (((v - lo) / width) as usize).min(nbins - 1);
        counts[idx] += 1;
    }
    let hist_rows: Vec<Vec<String>> = counts
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            vec![
                fmt_f64(lo + i as f64 * width),
                fmt_f64(lo + (i + 1) as f64 * width),
                count.to_string(),
            ]
        })
        .collect();
    write_csv(
        &resolved.out_path("diagnose_rho_hist.csv"),
        "bin_lo,bin_hi,count",
        &hist_rows,
    )?;

    let report = Report::new(
        "diagnose",
        Some(input),
        resolved.echo.clone(),
        &output.report,
    )?;
    let path = resolved.out_path("diagnose.json");
    report.write(&path)?;
    let summary = &output.report;
    println!(
        "max gap {}  wt gap {}  shared bins {}/{}  perm p {}",
        summary.max_gap.map_or("n/a".into(), |v| format!("{v:.4}")),
        summary.wt_gap.map_or("n/a".into(), |v| format!("{v:.4}")),
        summary.shared_bins,
        summary.bin_count,
        summary.perm_p.map_or("n/a".into(), |v| format!("{v:.4}")),
    );
    println!("wrote {}", path.display());
    Ok(())
}
