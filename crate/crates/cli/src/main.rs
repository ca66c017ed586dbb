//! `calkit` — calibration metrics, post-hoc calibrators, and
//! routing-conditional diagnostics over JSONL/CSV prediction records.
//!
//! Exit codes: 0 success, 2 input/validation failure, 3 computation failure.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use calkit_core::Error;
use config::Resolved;

#[derive(Parser)]
#[command(name = "calkit", version, about = "Calibration diagnostics toolkit")]
struct Cli {
    /// Flat key=value config file; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed for every stochastic procedure.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for reports and tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: one per core). Results do not depend on
    /// this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every record invariant; fails on the first violation with its
    /// line number.
    Validate { input: PathBuf },
    /// Emit the per-sample scalar feature table as CSV.
    Features { input: PathBuf },
    /// Fit one post-hoc calibrator on the calibration half and apply it to
    /// the test half.
    Calibrate {
        input: PathBuf,
        /// ts|vs|cts|hb|iso|lc|rcmmc|nw-conf|nw-predent|ar-condcal
        #[arg(long)]
        method: String,
        /// scott|scott0.5|scott2|cv-nll|oracle-ece (kernel methods only)
        #[arg(long)]
        bw_mode: Option<String>,
        /// Routing feature consumed by ar-condcal.
        #[arg(long)]
        feature: Option<String>,
        #[arg(long)]
        cal_fraction: Option<f64>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Compute the metric battery on the records as given (no split, no
    /// fitting).
    Evaluate {
        input: PathBuf,
        /// Feature defining the tertiles of the worst-tertile metric.
        #[arg(long)]
        feature: Option<String>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Matched-confidence gap protocol with bootstrap CIs and the
    /// within-bin permutation test.
    Diagnose {
        input: PathBuf,
        #[arg(long)]
        feature: Option<String>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        min_support: Option<usize>,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        perm: Option<usize>,
    },
    /// Capacity-matched probe audit (five regressors, shared split).
    Probe {
        input: PathBuf,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        weight_decay: Option<f64>,
        #[arg(long)]
        ridge_lambda: Option<f64>,
        #[arg(long)]
        split_fraction: Option<f64>,
    },
    /// Generate a synthetic two-group substrate with a planted
    /// matched-confidence gap.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
        /// Accuracy gap between the routing groups inside the window.
        #[arg(long)]
        gap: Option<f64>,
        #[arg(long)]
        window_lo: Option<f64>,
        #[arg(long)]
        window_hi: Option<f64>,
        #[arg(long)]
        conf_lo: Option<f64>,
        #[arg(long)]
        conf_hi: Option<f64>,
        #[arg(long)]
        beta_a: Option<f64>,
        #[arg(long)]
        beta_b: Option<f64>,
        #[arg(long)]
        depth_std: Option<f64>,
        /// Which profile statistic carries the routing signal: mean|spread.
        #[arg(long)]
        routing_axis: Option<String>,
    },
    /// Kernel-calibrator bandwidth sweep over the five modes.
    BwSweep {
        input: PathBuf,
        #[arg(long)]
        feature: Option<String>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Full calibrator comparison: split, fit every method, evaluate with
    /// bootstrap CIs.
    Benchmark {
        input: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        feature: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads > 0 {
            // Ignore failure: the pool may already exist in tests.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_) => ExitCode::from(2),
                Error::Degenerate(_) | Error::Numerical(_) => ExitCode::from(3),
            }
        }
    }
}

fn run(cli: Cli) -> calkit_core::Result<()> {
    let file = config::FileConfig::load(cli.config.as_deref())?;
    let resolved = Resolved::new(file, cli.seed, cli.out);
    match cli.command {
        Command::Validate { input } => commands::validate::run(&input),
        Command::Features { input } => commands::features::run(&input, &resolved),
        Command::Calibrate {
            input,
            method,
            bw_mode,
            feature,
            cal_fraction,
            bins,
        } => commands::calibrate::run(
            &input,
            &method,
            bw_mode.as_deref(),
            feature.as_deref(),
            cal_fraction,
            bins,
            &resolved,
        ),
        Command::Evaluate {
            input,
            feature,
            bins,
        } => commands::evaluate::run(&input, feature.as_deref(), bins, &resolved),
        Command::Diagnose {
            input,
            feature,
            bins,
            min_support,
            bootstrap,
            perm,
        } => commands::diagnose::run(
            &input,
            feature.as_deref(),
            bins,
            min_support,
            bootstrap,
            perm,
            &resolved,
        ),
        Command::Probe {
            input,
            hidden,
            epochs,
            lr,
            weight_decay,
            ridge_lambda,
            split_fraction,
        } => commands::probe::run(
            &input,
            hidden,
            epochs,
            lr,
            weight_decay,
            ridge_lambda,
            split_fraction,
            &resolved,
        ),
        Command::Synth {
            n,
            classes,
            layers,
            gap,
            window_lo,
            window_hi,
            conf_lo,
            conf_hi,
            beta_a,
            beta_b,
            depth_std,
            routing_axis,
        } => commands::synth::run(
            commands::synth::Args {
                n,
                classes,
                layers,
                gap,
                window_lo,
                window_hi,
                conf_lo,
                conf_hi,
                beta_a,
                beta_b,
                depth_std,
                routing_axis,
            },
            &resolved,
        ),
        Command::BwSweep {
            input,
            feature,
            bins,
        } => commands::bw_sweep::run(&input, feature.as_deref(), bins, &resolved),
        Command::Benchmark {
            input,
            bins,
            bootstrap,
            feature,
        } => commands::benchmark::run(&input, bins, bootstrap, feature.as_deref(), &resolved),
    }
}
