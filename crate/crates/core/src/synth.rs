//! Synthetic substrates with known conditional accuracy, plus numerical
//! validators for the supporting population-level identities.
//!
//! The planted generator draws confidence from a rescaled Beta law,
//! assigns each sample to a routing group, and makes correctness Bernoulli
//! with probability `eta_g(c) = c + offset_g(c)`. Logits are synthesized so
//! the softmax confidence equals `c` exactly (top class `ln c`, remaining
//! mass spread uniformly), and the per-layer entropy profile is a fixed
//! depth pattern scaled to hit the sample's routing value and the requested
//! depth spread. Ground truth is therefore known bin by bin.

use rand::distributions::Distribution;
use rand_distr::Beta;
use serde::{Deserialize, Serialize};

use crate::calibrate::{nw_predict, BandwidthMode, KernelSpec, NwModel};
use crate::data::{Dataset, PredictionRecord};
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamDomain};

/// Accuracy offset added to the calibrated baseline `eta = c` for one group.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum OffsetFn {
    Zero,
    Constant(f64),
    /// `amount` inside `[lo, hi]` on the confidence axis, zero outside.
    Window {
        amount: f64,
        lo: f64,
        hi: f64,
    },
}

impl OffsetFn {
    pub fn eval(&self, c: f64) -> f64 {
        match *self {
            OffsetFn::Zero => 0.0,
            OffsetFn::Constant(a) => a,
            OffsetFn::Window { amount, lo, hi } => {
                if (lo..=hi).contains(&c) {
                    amount
                } else {
                    0.0
                }
            }
        }
    }
}

/// One routing group: sampling weight, routing-value law (normal, clamped
/// to [0,1]), and its accuracy offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub weight: f64,
    pub r_mean: f64,
    pub r_sd: f64,
    pub offset: OffsetFn,
}

/// Which profile statistic carries the routing value `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoutingAxis {
    /// `r` is the profile depth mean; depth spread is nuisance jitter of
    /// scale `depth_std`.
    Mean,
    /// `r` drives the depth spread (`r_std = 0.2 r`); the depth mean sits
    /// near 0.5 with small jitter.
    Spread,
}

const SPREAD_SCALE: f64 = 0.2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedSubstrateSpec {
    pub n: usize,
    pub class_count: usize,
    pub layer_count: usize,
    /// Beta parameters for the confidence draw.
    pub conf_beta: (f64, f64),
    /// The Beta draw is mapped affinely onto this range; it must stay
    /// inside (1/K, 1) so the logit construction is exact.
    pub conf_range: (f64, f64),
    pub groups: Vec<GroupSpec>,
    /// Depth-spread scale of the entropy profile on the `Mean` axis
    /// (per-sample spread drawn from `[0.5, 1.5] * depth_std`); 0 gives
    /// constant profiles. Ignored on the `Spread` axis.
    pub depth_std: f64,
    pub routing_axis: RoutingAxis,
    pub seed: u64,
}

impl PlantedSubstrateSpec {
    /// Two equal-weight groups at routing centers 0.3 / 0.7 whose accuracy
    /// differs by `gap` inside the confidence window.
    pub fn two_group(
        n: usize,
        class_count: usize,
        layer_count: usize,
        gap: f64,
        window: (f64, f64),
        seed: u64,
    ) -> Self {
        let half = gap / 2.0;
        Self {
            n,
            class_count,
            layer_count,
            conf_beta: (1.0, 1.0),
            conf_range: (0.52, 0.97),
            groups: vec![
                GroupSpec {
                    weight: 0.5,
                    r_mean: 0.3,
                    r_sd: 0.05,
                    offset: OffsetFn::Window {
                        amount: half,
                        lo: window.0,
                        hi: window.1,
                    },
                },
                GroupSpec {
                    weight: 0.5,
                    r_mean: 0.7,
                    r_sd: 0.05,
                    offset: OffsetFn::Window {
                        amount: -half,
                        lo: window.0,
                        hi: window.1,
                    },
                },
            ],
            depth_std: 0.0,
            routing_axis: RoutingAxis::Mean,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.class_count < 2 || self.groups.is_empty() {
            return Err(Error::invalid("empty substrate spec"));
        }
        let k_floor = 1.0 / self.class_count as f64;
        let (lo, hi) = self.conf_range;
        if !(lo > k_floor && hi < 1.0 && lo < hi) {
            return Err(Error::invalid(format!(
                "confidence range ({lo}, {hi}) must lie inside (1/K, 1)"
            )));
        }
        if self.conf_beta.0 <= 0.0 || self.conf_beta.1 <= 0.0 {
            return Err(Error::invalid("Beta parameters must be positive"));
        }
        let weight_sum: f64 = self.groups.iter().map(|g| g.weight).sum();
        if (weight_sum - 1.0).abs() > 1e-9 || self.groups.iter().any(|g| g.weight <= 0.0) {
            return Err(Error::invalid(
                "group weights must be positive and sum to 1",
            ));
        }
        for group in &self.groups {
            // eta = c + offset(c) is piecewise linear in c; checking the
            // piece endpoints bounds it everywhere.
            let mut points = vec![lo, hi];
            if let OffsetFn::Window { lo: wl, hi: wh, .. } = group.offset {
                for p in [wl, wh] {
                    if p > lo && p < hi {
                        points.push(p);
                    }
                }
            }
            for &c in &points {
                let eta = c + group.offset.eval(c);
                if !(0.0..=1.0).contains(&eta) {
                    return Err(Error::invalid(format!(
                        "conditional accuracy {eta} at confidence {c} outside [0,1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Fixed zero-mean unit-spread depth pattern (centered ramp).
fn depth_pattern(l: usize) -> Vec<f64> {
    if l <= 1 {
        return vec![0.0; l];
    }
    let mean = (l - 1) as f64 / 2.0;
    let raw: Vec<f64> = (0..l).map(|i| i as f64 - mean).collect();
    let scale = (raw.iter().map(|v| v * v).sum::<f64>() / l as f64).sqrt();
    raw.iter().map(|v| v / scale).collect()
}

/// Ground truth attached to each generated record, in dataset order.
#[derive(Debug, Clone)]
pub struct PlantedTruth {
    pub confidence: Vec<f64>,
    pub group: Vec<usize>,
    pub routing: Vec<f64>,
    pub eta: Vec<f64>,
}

pub fn generate_planted(spec: &PlantedSubstrateSpec) -> Result<(Dataset, PlantedTruth)> {
    spec.validate()?;
    let mut rng = RngStream::derive(spec.seed, StreamDomain::Synth, 0);
    let beta = Beta::new(spec.conf_beta.0, spec.conf_beta.1)
        .map_err(|e| Error::invalid(format!("beta law: {e}")))?;
    let k = spec.class_count;
    let pattern = depth_pattern(spec.layer_count);
    let mut records = Vec::with_capacity(spec.n);
    let mut truth = PlantedTruth {
        confidence: Vec::with_capacity(spec.n),
        group: Vec::with_capacity(spec.n),
        routing: Vec::with_capacity(spec.n),
        eta: Vec::with_capacity(spec.n),
    };
    for i in 0..spec.n {
        let u: f64 = beta.sample(&mut rng);
        let c = spec.conf_range.0 + u * (spec.conf_range.1 - spec.conf_range.0);
        let g = {
            let draw = rng.next_f64();
            let mut acc = 0.0;
            let mut chosen = spec.groups.len() - 1;
            for (gi, group) in spec.groups.iter().enumerate() {
                acc += group.weight;
                if draw < acc {
                    chosen = gi;
                    break;
                }
            }
            chosen
        };
        let group = &spec.groups[g];
        let r = (group.r_mean + group.r_sd * rng.next_normal()).clamp(0.0, 1.0);
        let eta = c + group.offset.eval(c);
        let correct = rng.next_bool(eta);
        let pred = rng.next_index(k);
        let label = if correct {
            pred
        } else {
            let other = rng.next_index(k - 1);
            if other >= pred {
                other + 1
            } else {
                other
            }
        };
        let rest = ((1.0 - c) / (k - 1) as f64).ln();
        let logits: Vec<f64> = (0..k)
            .map(|j| if j == pred { c.ln() } else { rest })
            .collect();
        let mut record = PredictionRecord::new(format!("synth{i}"), logits, label);
        if spec.layer_count > 0 {
            // The depth pattern has zero mean, so jitter on the spread never
            // moves the profile mean.
            let (center, spread) = match spec.routing_axis {
                RoutingAxis::Mean => {
                    let jitter = spec.depth_std * (0.5 + rng.next_f64());
                    (r, jitter)
                }
                RoutingAxis::Spread => {
                    let mean_jitter = 0.05 * (2.0 * rng.next_f64() - 1.0);
                    (0.5 + mean_jitter, SPREAD_SCALE * r)
                }
            };
            record.entropy_profile = Some(
                pattern
                    .iter()
                    .map(|s| (center + spread * s).clamp(0.0, 1.0))
                    .collect(),
            );
        }
        records.push(record);
        truth.confidence.push(c);
        truth.group.push(g);
        truth.routing.push(r);
        truth.eta.push(eta);
    }
    Ok((Dataset::new(records)?, truth))
}

/// A finite joint over (confidence, routing, correctness): cell `i` has mass
/// `prob`, coordinates `(c, r)`, and conditional accuracy `eta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointCell {
    pub c: f64,
    pub r: f64,
    pub prob: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteJoint {
    pub cells: Vec<JointCell>,
}

impl DiscreteJoint {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.cells.iter().map(|c| c.prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("cell masses sum to {total}, not 1")));
        }
        for cell in &self.cells {
            if cell.prob < 0.0 || !(0.0..=1.0).contains(&cell.eta) {
                return Err(Error::invalid(
                    "cell with negative mass or eta outside [0,1]",
                ));
            }
        }
        Ok(())
    }

    /// A random joint on a small (c, r) grid, for identity stress tests.
    pub fn random(rng: &mut RngStream) -> Self {
        let n_c = 2 + rng.next_index(4);
        let n_r = 2 + rng.next_index(4);
        let c_values: Vec<f64> = (0..n_c).map(|_| rng.next_f64()).collect();
        let r_values: Vec<f64> = (0..n_r).map(|_| rng.next_f64()).collect();
        let mut cells = Vec::with_capacity(n_c * n_r);
        let mut total = 0.0;
        for &c in &c_values {
            for &r in &r_values {
                let mass = rng.next_f64() + 1e-3;
                total += mass;
                cells.push(JointCell {
                    c,
                    r,
                    prob: mass,
                    eta: rng.next_f64(),
                });
            }
        }
        for cell in &mut cells {
            cell.prob /= total;
        }
        Self { cells }
    }
}

/// Exact enumeration of the squared-error decomposition: the risk reduction
/// from conditioning on (c, r) instead of c alone, and the explained
/// variance `E[(eta_{c,r} - eta_c)^2]`. The two are equal (a Pythagorean
/// identity), which the caller asserts.
pub fn check_prop1(joint: &DiscreteJoint) -> Result<(f64, f64)> {
    joint.validate()?;
    // eta_c: group cells by exact confidence value.
    let mut by_c: std::collections::BTreeMap<u64, (f64, f64)> = std::collections::BTreeMap::new();
    for cell in &joint.cells {
        let entry = by_c.entry(cell.c.to_bits()).or_insert((0.0, 0.0));
        entry.0 += cell.prob;
        entry.1 += cell.prob * cell.eta;
    }
    let eta_c = |c: f64| {
        let (mass, mean) = by_c[&c.to_bits()];
        mean / mass
    };
    // E[(T - a)^2 | cell] = eta (1-a)^2 + (1-eta) a^2.
    let sq_risk = |eta: f64, a: f64| eta * (1.0 - a) * (1.0 - a) + (1.0 - eta) * a * a;
    let mut risk_c = 0.0;
    let mut risk_cr = 0.0;
    let mut explained = 0.0;
    for cell in &joint.cells {
        let ec = eta_c(cell.c);
        risk_c += cell.prob * sq_risk(cell.eta, ec);
        risk_cr += cell.prob * sq_risk(cell.eta, cell.eta);
        explained += cell.prob * (cell.eta - ec) * (cell.eta - ec);
    }
    Ok((risk_c - risk_cr, explained))
}

/// Worst-subgroup mismatch of a confidence-only output `pi` against the
/// per-group conditional accuracies, and the spread lower bound
/// `max_g,g' |eta_g - eta_g'| / 2` that no choice of `pi` can beat.
pub fn check_prop2(eta_by_group: &[f64], pi: f64) -> Result<(f64, f64)> {
    if eta_by_group.len() < 2 {
        return Err(Error::invalid("need at least 2 subgroups"));
    }
    let mismatch = eta_by_group
        .iter()
        .map(|e| (pi - e).abs())
        .fold(f64::NEG_INFINITY, f64::max);
    let max = eta_by_group
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = eta_by_group.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((mismatch, 0.5 * (max - min)))
}

/// Two point-mass routing subgroups at `-d/2` and `+d/2` with conditional
/// means `f_minus`, `f_plus`, smoothed by a 1-D Gaussian kernel of width `h`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TwoGroupSpec {
    pub d: f64,
    pub f_minus: f64,
    pub f_plus: f64,
    pub h: f64,
    pub n: usize,
}

impl TwoGroupSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid("separation and bandwidth must be positive"));
        }
        for f in [self.f_minus, self.f_plus] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid("conditional means must lie in [0,1]"));
            }
        }
        Ok(())
    }

    fn point_mass_model(&self) -> NwModel {
        NwModel {
            c: vec![-self.d / 2.0, self.d / 2.0],
            r: None,
            t: vec![self.f_minus, self.f_plus],
            spec: KernelSpec {
                h_c: self.h,
                h_r: None,
                multiplier: 1.0,
                mode: BandwidthMode::ScottTimes(1.0),
                degenerate_sigma: false,
            },
        }
    }
}

/// Analytic smoothed gap `(f_minus - f_plus) tanh(d^2 / (4 h^2))` and the
/// kernel estimator's gap between the two group centers on the exact
/// two-point calibration set. The two agree to machine precision.
pub fn check_prop4(spec: &TwoGroupSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let analytic =
        (spec.f_minus - spec.f_plus) * (spec.d * spec.d / (4.0 * spec.h * spec.h)).tanh();
    let model = spec.point_mass_model();
    let empirical =
        nw_predict(&model, -spec.d / 2.0, None) - nw_predict(&model, spec.d / 2.0, None);
    Ok((analytic, empirical))
}

/// Sampled variant: `n` Bernoulli draws per group at the exact centers; the
/// kernel gap then fluctuates around the analytic value at the usual
/// root-n rate.
pub fn sampled_prop4_gap(spec: &TwoGroupSpec, rng: &mut RngStream) -> Result<f64> {
    spec.validate()?;
    let mut c = Vec::with_capacity(2 * spec.n);
    let mut t = Vec::with_capacity(2 * spec.n);
    for _ in 0..spec.n {
        c.push(-spec.d / 2.0);
        t.push(f64::from(rng.next_bool(spec.f_minus)));
    }
    for _ in 0..spec.n {
        c.push(spec.d / 2.0);
        t.push(f64::from(rng.next_bool(spec.f_plus)));
    }
    let model = NwModel {
        c,
        r: None,
        t,
        spec: KernelSpec {
            h_c: spec.h,
            h_r: None,
            multiplier: 1.0,
            mode: BandwidthMode::ScottTimes(1.0),
            degenerate_sigma: false,
        },
    };
    Ok(nw_predict(&model, -spec.d / 2.0, None) - nw_predict(&model, spec.d / 2.0, None))
}

/// Smooth conditional-accuracy surface used by the kernel-consistency
/// checks: well inside (0, 1), curved in both axes.
pub fn smooth_g(c: f64, r: f64) -> f64 {
    0.5 + 0.3 * (std::f64::consts::PI * c).sin() * (0.5 - r) + 0.15 * (c - 0.5)
}

/// Draw `(c_i, r_i, t_i)` with `t ~ Bernoulli(smooth_g(c, r))` on the unit
/// square.
pub fn generate_smooth(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = RngStream::derive(seed, StreamDomain::Synth, 1);
    let mut c = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        let ci = rng.next_f64();
        let ri = rng.next_f64();
        c.push(ci);
        r.push(ri);
        t.push(f64::from(rng.next_bool(smooth_g(ci, ri))));
    }
    (c, r, t)
}
