//! Shared fixtures for the criterion benches.

use calkit_core::calibrate::CalSample;
use calkit_core::data::{softmax_confidence, PredictionRecord};
use calkit_core::rng::{RngStream, StreamDomain};

/// Synthetic (confidence, correct) pairs with mild miscalibration.
pub fn conf_correct_pairs(n: usize, seed: u64) -> Vec<(f64, bool)> {
    let mut rng = RngStream::derive(seed, StreamDomain::Synth, 0);
    (0..n)
        .map(|_| {
            let c = 0.5 + 0.5 * rng.next_f64();
            (c, rng.next_bool((c - 0.05).clamp(0.0, 1.0)))
        })
        .collect()
}

/// Calibration samples with labels drawn from a blunted softmax.
pub fn cal_samples(n: usize, k: usize, seed: u64) -> Vec<CalSample> {
    let mut rng = RngStream::derive(seed, StreamDomain::Synth, 1);
    (0..n)
        .map(|i| {
            let logits: Vec<f64> = (0..k).map(|_| 2.0 * rng.next_normal()).collect();
            let blunted: Vec<f64> = logits.iter().map(|z| z * 0.7).collect();
            let (probs, _, _) = softmax_confidence(&blunted).unwrap();
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut label = k - 1;
            for (j, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    label = j;
                    break;
                }
            }
            let record = PredictionRecord::new(format!("b{i}"), logits, label);
            CalSample::from_record(&record, Some(rng.next_f64())).unwrap()
        })
        .collect()
}
