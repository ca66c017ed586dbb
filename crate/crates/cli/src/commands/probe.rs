use std::path::Path;

use calkit_core::probe::{run_audit, ProbeConfig};
use calkit_core::{io, Result};

use crate::config::Resolved;
use crate::report::{fmt_f64, write_csv, Report};

#[allow(clippy::too_many_arguments)]
pub fn run(
    input: &Path,
    hidden: Option<usize>,
    epochs: Option<usize>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    ridge_lambda: Option<f64>,
    split_fraction: Option<f64>,
    resolved: &Resolved,
) -> Result<()> {
    let mut resolved = resolved.clone();
    let config = ProbeConfig {
        hidden_width: resolved.value("hidden", hidden, 16usize)?,
        epochs: resolved.value("epochs", epochs, 200usize)?,
        learning_rate: resolved.value("lr", lr, 1e-2f64)?,
        weight_decay: resolved.value("weight_decay", weight_decay, 1e-4f64)?,
        split_seed: resolved.seed,
        split_fraction: resolved.value("split_fraction", split_fraction, 0.5f64)?,
        ridge_lambda: resolved.value("ridge_lambda", ridge_lambda, 1e-3f64)?,
    };
    let dataset = io::read_auto(input)?;
    let output = run_audit(&dataset, &config)?;

    resolved.ensure_out_dir()?;
    for (name, losses) in &output.losses {
        let rows: Vec<Vec<String>> = losses
            .iter()
            .enumerate()
            .map(|(epoch, &loss)| vec![epoch.to_string(), fmt_f64(loss)])
            .collect();
        write_csv(
            &resolved.out_path(&format!("probe_loss_{name}.csv")),
            "epoch,loss",
            &rows,
        )?;
    }
    let pair_rows: Vec<Vec<String>> = output
        .pairs
        .iter()
        .map(|&(r_std, target)| vec![fmt_f64(r_std), fmt_f64(target)])
        .collect();
    write_csv(
        &resolved.out_path("probe_pairs.csv"),
        "r_std,abs_conf_minus_correct",
        &pair_rows,
    )?;

    let report = Report::new("probe", Some(input), resolved.echo.clone(), &output.report)?;
    let path = resolved.out_path("probe.json");
    report.write(&path)?;
    let r = &output.report;
    println!(
        "held-out R^2: conf-lin {:.3}  conf-mlp {:.3}  full-lin {:.3}  full-mlp {:.3}  shuf-full-mlp {:.3}",
        r.r2_conf_lin, r.r2_conf_mlp, r.r2_full_lin, r.r2_full_mlp, r.r2_shuf_full_mlp
    );
    println!(
        "spearman(r_std, |conf-correct|) = {:.4} (p = {:.4})",
        r.spearman_rho, r.spearman_p
    );
    println!("wrote {}", path.display());
    Ok(())
}
