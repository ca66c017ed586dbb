use serde::Serialize;

use calkit_core::synth::{generate_planted, PlantedSubstrateSpec, RoutingAxis};
use calkit_core::{io, Error, Result};

use crate::config::Resolved;
use crate::report::Report;

pub struct Args {
    pub n: Option<usize>,
    pub classes: Option<usize>,
    pub layers: Option<usize>,
    pub gap: Option<f64>,
    pub window_lo: Option<f64>,
    pub window_hi: Option<f64>,
    pub conf_lo: Option<f64>,
    pub conf_hi: Option<f64>,
    pub beta_a: Option<f64>,
    pub beta_b: Option<f64>,
    pub depth_std: Option<f64>,
    pub routing_axis: Option<String>,
}

#[derive(Serialize)]
struct SynthSummary {
    spec: PlantedSubstrateSpec,
    records: usize,
    empirical_accuracy: f64,
}

pub fn run(args: Args, resolved: &Resolved) -> Result<()> {
    let mut resolved = resolved.clone();
    let n = resolved.value("n", args.n, 10_000usize)?;
    let classes = resolved.value("classes", args.classes, 2usize)?;
    let layers = resolved.value("layers", args.layers, 4usize)?;
    let gap = resolved.value("gap", args.gap, 0.0f64)?;
    let window_lo = resolved.value("window_lo", args.window_lo, 0.6f64)?;
    let window_hi = resolved.value("window_hi", args.window_hi, 0.8f64)?;
    let conf_lo = resolved.value("conf_lo", args.conf_lo, 0.52f64)?;
    let conf_hi = resolved.value("conf_hi", args.conf_hi, 0.97f64)?;
    let beta_a = resolved.value("beta_a", args.beta_a, 1.0f64)?;
    let beta_b = resolved.value("beta_b", args.beta_b, 1.0f64)?;
    let depth_std = resolved.value("depth_std", args.depth_std, 0.0f64)?;
    let axis_name = resolved.value("routing_axis", args.routing_axis, "mean".to_string())?;
    let routing_axis = match axis_name.as_str() {
        "mean" => RoutingAxis::Mean,
        "spread" => RoutingAxis::Spread,
        other => return Err(Error::invalid(format!("unknown routing axis {other:?}"))),
    };

    let mut spec = PlantedSubstrateSpec::two_group(
        n,
        classes,
        layers,
        gap,
        (window_lo, window_hi),
        resolved.seed,
    );
    spec.conf_range = (conf_lo, conf_hi);
    spec.conf_beta = (beta_a, beta_b);
    spec.depth_std = depth_std;
    spec.routing_axis = routing_axis;
    let (dataset, _truth) = generate_planted(&spec)?;

    resolved.ensure_out_dir()?;
    let data_path = resolved.out_path("synth.jsonl");
    io::write_jsonl_path(&dataset, &data_path)?;

    let accuracy = dataset
        .records()
        .iter()
        .map(|r| {
            let (_, pred, _) = calkit_core::data::softmax_confidence(&r.logits).unwrap();
            f64::from(pred == r.label)
        })
        .sum::<f64>()
        / dataset.len() as f64;
    let summary = SynthSummary {
        spec,
        records: dataset.len(),
        empirical_accuracy: accuracy,
    };
    let report = Report::new("synth", None, resolved.echo.clone(), summary)?;
    report.write(&resolved.out_path("synth.json"))?;
    println!(
        "wrote {} records to {} (accuracy {:.4})",
        dataset.len(),
        data_path.display(),
        accuracy
    );
    Ok(())
}
