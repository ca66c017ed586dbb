use std::path::Path;

use calkit_core::features::{scalar_feature, FeatureKind};
use calkit_core::{io, Error, Result};

use serde::Serialize;

use crate::config::Resolved;
use crate::report::{fmt_f64, write_csv, Report};

#[derive(Serialize)]
struct FeatureSummary {
    rows: usize,
    columns: Vec<&'static str>,
}

const COLUMNS: [(&str, FeatureKind); 6] = [
    ("conf", FeatureKind::ConfidenceOnly),
    ("pred_entropy", FeatureKind::PredEntropy),
    ("r_agg", FeatureKind::AggEntropy),
    ("r_std", FeatureKind::DepthVariance),
    ("h_last", FeatureKind::LastLayerEntropy),
    ("ent_x_conf", FeatureKind::EntropyTimesConfidence),
];

pub fn run(input: &Path, resolved: &Resolved) -> Result<()> {
    let dataset = io::read_auto(input)?;
    if !dataset.has_routing() {
        return Err(Error::invalid(
            "feature table needs routing profiles (r_agg, r_std, h_last)",
        ));
    }
    let mut rows = Vec::with_capacity(dataset.len());
    for record in dataset.records() {
        let mut row = vec![record.id.clone()];
        for (_, kind) in &COLUMNS {
            row.push(fmt_f64(scalar_feature(record, kind)?));
        }
        rows.push(row);
    }
    resolved.ensure_out_dir()?;
    let path = resolved.out_path("features.csv");
    write_csv(
        &path,
        "id,conf,pred_entropy,r_agg,r_std,h_last,ent_x_conf",
        &rows,
    )?;
    let summary = FeatureSummary {
        rows: rows.len(),
        columns: COLUMNS.map(|(name, _)| name).to_vec(),
    };
    Report::new("features", Some(input), resolved.echo.clone(), summary)?
        .write(&resolved.out_path("features.json"))?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}
