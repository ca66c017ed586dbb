pub mod benchmark;
pub mod bw_sweep;
pub mod calibrate;
pub mod diagnose;
pub mod evaluate;
pub mod features;
pub mod probe;
pub mod synth;
pub mod validate;

use calkit_core::calibrate::CalSample;
use calkit_core::data::{split_indices, SplitSpec};
use calkit_core::features::{feature_column, FeatureKind};
use calkit_core::{Dataset, Result};

/// Split into (cal, test) sample lists, attaching a routing feature column
/// when requested. The column is computed on the full dataset before
/// splitting, so cache-level transforms (min-max rescaling) see every value
/// and never a label.
pub fn split_samples(
    dataset: &Dataset,
    spec: &SplitSpec,
    feature: Option<&FeatureKind>,
) -> Result<(Vec<CalSample>, Vec<CalSample>)> {
    let column = match feature {
        Some(kind) if dataset.has_routing() || !kind.needs_routing() => {
            Some(feature_column(dataset, kind)?)
        }
        _ => None,
    };
    let (cal_idx, test_idx) = split_indices(dataset.len(), spec)?;
    let gather = |indices: &[usize]| -> Result<Vec<CalSample>> {
        indices
            .iter()
            .map(|&i| {
                CalSample::from_record(&dataset.records()[i], column.as_ref().map(|col| col[i]))
            })
            .collect()
    };
    Ok((gather(&cal_idx)?, gather(&test_idx)?))
}
