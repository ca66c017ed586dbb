//! Histogram binning: replace top-class confidence by the per-bin empirical
//! accuracy over equal-mass calibration bins.

use serde::{Deserialize, Serialize};

use super::CalSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramModel {
    /// Largest calibration confidence in each (nonempty) bin, ascending.
    pub upper_edges: Vec<f64>,
    /// Empirical accuracy per bin.
    pub values: Vec<f64>,
}

/// Equal-mass bins over the sorted calibration confidences (sizes differ by
/// at most one; the remainder goes to the leading bins).
pub fn fit_histogram_binning(cal: &[CalSample], bin_count: usize) -> Result<HistogramModel> {
    if cal.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    if bin_count == 0 {
        return Err(Error::invalid("bin_count must be >= 1"));
    }
    let mut sorted: Vec<(f64, bool)> = cal.iter().map(|s| (s.conf, s.correct)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = sorted.len();
    let base = n / bin_count;
    let rem = n % bin_count;
    let mut upper_edges = Vec::new();
    let mut values = Vec::new();
    let mut start = 0;
    for i in 0..bin_count {
        let size = base + usize::from(i < rem);
        if size == 0 {
            continue;
        }
        let block = &sorted[start..start + size];
        start += size;
        let acc = block.iter().filter(|&&(_, t)| t).count() as f64 / size as f64;
        upper_edges.push(block.last().unwrap().0);
        values.push(acc);
    }
    Ok(HistogramModel {
        upper_edges,
        values,
    })
}

impl HistogramModel {
    /// Calibrated confidence: the accuracy of the first bin whose upper edge
    /// covers `conf` (queries above every edge fall into the last bin).
    pub fn lookup(&self, conf: f64) -> f64 {
        let idx = self
            .upper_edges
            .partition_point(|&edge| edge < conf)
            .min(self.values.len() - 1);
        self.values[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::CalSample;
    use crate::data::PredictionRecord;

    fn sample(conf_logit: f64, correct: bool) -> CalSample {
        // Two-class record with chosen top confidence sign.
        let rec = PredictionRecord::new("x", vec![conf_logit, 0.0], if correct { 0 } else { 1 });
        CalSample::from_record(&rec, None).unwrap()
    }

    #[test]
    fn bin_members_map_to_bin_accuracy() {
        // 10 samples, one bin: accuracy 0.7 replaces every confidence.
        let cal: Vec<CalSample> = (0..10)
            .map(|i| sample(2.0 + i as f64 * 0.01, i < 7))
            .collect();
        let model = fit_histogram_binning(&cal, 1).unwrap();
        assert_eq!(model.values, vec![0.7]);
        assert!((model.lookup(0.9) - 0.7).abs() < 1e-12);
        assert!((model.lookup(0.2) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn queries_route_to_the_right_block() {
        // Two blocks of 2: low-conf block acc 0.0, high-conf block acc 1.0.
        let cal = vec![
            sample(0.1, false),
            sample(0.2, false),
            sample(3.0, true),
            sample(3.5, true),
        ];
        let model = fit_histogram_binning(&cal, 2).unwrap();
        assert_eq!(model.values, vec![0.0, 1.0]);
        assert_eq!(model.lookup(0.50), 0.0);
        assert_eq!(model.lookup(0.99), 1.0);
    }

    #[test]
    fn more_bins_than_samples() {
        let cal = vec![sample(1.0, true), sample(2.0, false)];
        let model = fit_histogram_binning(&cal, 15).unwrap();
        assert_eq!(model.values.len(), 2);
    }
}
