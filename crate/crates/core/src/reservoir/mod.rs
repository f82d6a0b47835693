//! Software emulation of a single-node delay-loop reservoir.
//!
//! One datapoint of `L` real samples is serialized into a chip stream: each
//! sample is spread over the `N` chips of the input mask, every chip passes
//! the nonlinear node together with the delayed feedback of the node value
//! one loop round-trip (`N` chips) earlier, and a short causal filter couples
//! neighbouring virtual nodes. The reservoir state is the vector of node
//! values after the final sample has gone around the loop.

mod emulate;

use rand::Rng;
use rand_distr::Open01;

use crate::error::{invalid, Result};
use crate::rng;

pub use emulate::{run_loop, run_split_loop, run_stacked_loops, Reservoir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Nonlinearity {
    SinSquared,
    Tanh,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Nonlinearity::SinSquared => {
                let s = v.sin();
                s * s
            }
            Nonlinearity::Tanh => v.tanh(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::SinSquared => "sin_squared",
            Nonlinearity::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sin_squared" | "sin2" => Ok(Nonlinearity::SinSquared),
            "tanh" => Ok(Nonlinearity::Tanh),
            other => Err(format!("unknown nonlinearity `{other}`")),
        }
    }
}

/// All hyperparameters of the emulated loop (or loop stack).
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirConfig {
    /// Virtual nodes per loop; the loop delay is `n_nodes` chips.
    pub n_nodes: usize,
    /// Gain applied to the spread input chip.
    pub input_gain: f64,
    /// Gain applied to the node value fed back after one round trip.
    pub feedback_gain: f64,
    pub nonlinearity: Nonlinearity,
    pub filter_taps: usize,
    pub filter_time_constant: f64,
    /// Adds the previous round-trip node value on top of the filtered
    /// activation instead of replacing it.
    pub accumulate_prior_state: bool,
    pub split: bool,
    /// 1 for a single loop, 2 for a stacked pair.
    pub layers: usize,
    pub layer2_n_nodes: usize,
    pub seed: u64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            n_nodes: 600,
            input_gain: 0.5,
            feedback_gain: 0.5,
            nonlinearity: Nonlinearity::SinSquared,
            filter_taps: 5,
            filter_time_constant: 1.0,
            accumulate_prior_state: false,
            split: false,
            layers: 1,
            layer2_n_nodes: 600,
            seed: 7,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(invalid("n_nodes", "must be at least 1"));
        }
        if self.filter_taps == 0 || self.filter_taps > self.n_nodes {
            return Err(invalid(
                "filter_taps",
                format!("must lie in 1..={}, got {}", self.n_nodes, self.filter_taps),
            ));
        }
        if !(self.filter_time_constant > 0.0) || !self.filter_time_constant.is_finite() {
            return Err(invalid("filter_time_constant", "must be positive"));
        }
        if !self.input_gain.is_finite() || !self.feedback_gain.is_finite() {
            return Err(invalid("input_gain/feedback_gain", "must be finite"));
        }
        match self.layers {
            1 => {}
            2 => {
                if self.layer2_n_nodes == 0 || self.filter_taps > self.layer2_n_nodes {
                    return Err(invalid(
                        "layer2_n_nodes",
                        "must be at least 1 and at least filter_taps",
                    ));
                }
            }
            n => return Err(invalid("layers", format!("must be 1 or 2, got {n}"))),
        }
        Ok(())
    }

    /// Length of the state vector produced by this configuration.
    pub fn state_len(&self) -> usize {
        if self.layers == 2 {
            self.layer2_n_nodes
        } else {
            self.n_nodes
        }
    }

    /// Whether the reservoir lifts an `len`-sample datapoint into a strictly
    /// higher dimension (`N > L`, or `N > L/2` per half when split).
    pub fn is_separable_for(&self, len: usize) -> bool {
        if self.split {
            2 * self.n_nodes > len
        } else {
            self.n_nodes > len
        }
    }
}

/// Fixed random input mask: one chip per virtual node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadMask {
    chips: Vec<f64>,
    seed: u64,
}

impl SpreadMask {
    /// Draws `n_nodes` chips i.i.d. uniform on the open interval (-1, 1)
    /// from the `"mask"` stream of `seed`.
    pub fn new(n_nodes: usize, seed: u64) -> Self {
        Self::from_stream(n_nodes, seed, "mask")
    }

    /// Mask of the second stacked loop, drawn from its own stream.
    pub fn second_layer(n_nodes: usize, seed: u64) -> Self {
        Self::from_stream(n_nodes, seed, "mask.layer2")
    }

    fn from_stream(n_nodes: usize, seed: u64, name: &str) -> Self {
        let mut rng = rng::stream(seed, name);
        let chips = (0..n_nodes)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                2.0 * u - 1.0
            })
            .collect();
        Self { chips, seed }
    }

    /// Wraps explicit chip values. Chips outside (-1, 1) are rejected.
    pub fn from_chips(chips: Vec<f64>) -> Result<Self> {
        if chips.is_empty() {
            return Err(invalid("chips", "mask must have at least one chip"));
        }
        if let Some(c) = chips.iter().find(|c| !(c.abs() < 1.0)) {
            return Err(invalid("chips", format!("chip {c} outside (-1, 1)")));
        }
        Ok(Self { chips, seed: 0 })
    }

    pub fn chips(&self) -> &[f64] {
        &self.chips
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

pub fn make_mask(n_nodes: usize, seed: u64) -> SpreadMask {
    SpreadMask::new(n_nodes, seed)
}

/// Truncated causal exponential `h_j ∝ exp(-j / T)`, normalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterKernel {
    taps: Vec<f64>,
}

impl FilterKernel {
    pub fn exponential(taps: usize, time_constant: f64) -> Result<Self> {
        if taps == 0 {
            return Err(invalid("filter_taps", "must be at least 1"));
        }
        if !(time_constant > 0.0) || !time_constant.is_finite() {
            return Err(invalid("filter_time_constant", "must be positive and finite"));
        }
        let raw: Vec<f64> = (0..taps)
            .map(|j| (-(j as f64) / time_constant).exp())
            .collect();
        let sum: f64 = raw.iter().sum();
        Ok(Self {
            taps: raw.into_iter().map(|h| h / sum).collect(),
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

pub fn make_filter(taps: usize, time_constant: f64) -> Result<FilterKernel> {
    FilterKernel::exponential(taps, time_constant)
}

/// Final node values of the (last) loop for one datapoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub values: Vec<f64>,
}

impl ReservoirState {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mask_is_deterministic() {
        assert_eq!(make_mask(4, 11), make_mask(4, 11));
        assert_ne!(make_mask(4, 11), make_mask(4, 12));
    }

    #[test]
    fn mask_statistics() {
        let mask = make_mask(100_000, 3);
        assert!(mask.chips().iter().all(|c| *c > -1.0 && *c < 1.0));
        let mean = mask.chips().iter().sum::<f64>() / mask.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn mask_of_full_size() {
        assert_eq!(make_mask(600, 7).len(), 600);
    }

    #[test]
    fn layer_masks_differ() {
        assert_ne!(
            SpreadMask::new(16, 1).chips(),
            SpreadMask::second_layer(16, 1).chips()
        );
    }

    #[test]
    fn from_chips_rejects_closed_endpoints() {
        assert!(SpreadMask::from_chips(vec![0.5, 1.0]).is_err());
        assert!(SpreadMask::from_chips(vec![]).is_err());
    }

    #[test]
    fn single_tap_filter() {
        assert_eq!(make_filter(1, 1.0).unwrap().taps(), &[1.0]);
    }

    #[test]
    fn two_tap_filter_by_hand() {
        // 1 / (1 + e^-1) and e^-1 / (1 + e^-1)
        let f = make_filter(2, 1.0).unwrap();
        assert_abs_diff_eq!(f.taps()[0], 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_abs_diff_eq!(f.taps()[1], 0.268_941_421_369_995_1, epsilon = 1e-12);
    }

    #[test]
    fn five_tap_filter_shape() {
        let f = make_filter(5, 1.0).unwrap();
        assert_eq!(f.len(), 5);
        assert!(f.taps()[0] > 0.0);
        assert!(f.taps().windows(2).all(|w| w[0] >= w[1] && w[1] >= 0.0));
        assert_abs_diff_eq!(f.taps().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn filter_rejects_bad_parameters() {
        assert!(make_filter(0, 1.0).is_err());
        assert!(make_filter(3, 0.0).is_err());
        assert!(make_filter(3, -1.0).is_err());
        assert!(make_filter(3, f64::NAN).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ReservoirConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.filter_taps = cfg.n_nodes + 1;
        assert!(cfg.validate().is_err());
        cfg = ReservoirConfig {
            layers: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg = ReservoirConfig {
            filter_time_constant: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn separability_condition() {
        let cfg = ReservoirConfig {
            n_nodes: 200,
            ..Default::default()
        };
        assert!(!cfg.is_separable_for(256));
        assert!(ReservoirConfig { split: true, ..cfg }.is_separable_for(256));
    }
}
