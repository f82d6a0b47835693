use rayon::prelude::*;

use super::{FilterKernel, Nonlinearity, ReservoirConfig, ReservoirState, SpreadMask};
use crate::error::{invalid, Error, Result};

/// Streaming state of one loop: the node values of the last round trip and
/// the most recent `F` activations.
struct LoopLayer<'a> {
    mask: &'a [f64],
    taps: &'a [f64],
    input_gain: f64,
    feedback_gain: f64,
    nonlinearity: Nonlinearity,
    accumulate: bool,
    /// `nodes[k]` holds the latest value of virtual node `k`, i.e. `x(t - N)`
    /// when node `k` comes round again.
    nodes: Vec<f64>,
    /// Newest activation first.
    activations: Vec<f64>,
    cursor: usize,
}

impl<'a> LoopLayer<'a> {
    fn new(cfg: &ReservoirConfig, mask: &'a [f64], taps: &'a [f64]) -> Self {
        Self {
            mask,
            taps,
            input_gain: cfg.input_gain,
            feedback_gain: cfg.feedback_gain,
            nonlinearity: cfg.nonlinearity,
            accumulate: cfg.accumulate_prior_state,
            nodes: vec![0.0; mask.len()],
            activations: vec![0.0; taps.len()],
            cursor: 0,
        }
    }

    /// Advances one chip. `drive` is the value spread by this node's mask
    /// chip: the input sample for a first loop, the delayed upstream node
    /// value for a stacked loop.
    #[inline]
    fn step(&mut self, drive: f64) -> f64 {
        let k = self.cursor;
        let delayed = self.nodes[k];
        let a = self
            .nonlinearity
            .apply(self.feedback_gain * delayed + self.input_gain * drive * self.mask[k]);

        let f = self.activations.len();
        if f > 1 {
            self.activations.copy_within(0..f - 1, 1);
        }
        self.activations[0] = a;
        let mut x: f64 = self
            .taps
            .iter()
            .zip(&self.activations)
            .map(|(h, a)| h * a)
            .sum();
        if self.accumulate {
            x += delayed;
        }

        self.nodes[k] = x;
        self.cursor += 1;
        if self.cursor == self.nodes.len() {
            self.cursor = 0;
        }
        x
    }

    fn into_state(self) -> ReservoirState {
        ReservoirState { values: self.nodes }
    }
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("datapoint"));
    }
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

fn check_shapes(cfg: &ReservoirConfig, mask: &SpreadMask, filter: &FilterKernel) -> Result<()> {
    if mask.len() != cfg.n_nodes {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} chips, config has {} nodes",
            mask.len(),
            cfg.n_nodes
        )));
    }
    if filter.len() > cfg.n_nodes {
        return Err(invalid("filter_taps", "filter longer than the loop"));
    }
    Ok(())
}

fn single_pass(
    samples: &[f64],
    cfg: &ReservoirConfig,
    mask: &SpreadMask,
    filter: &FilterKernel,
) -> ReservoirState {
    let mut layer = LoopLayer::new(cfg, mask.chips(), filter.taps());
    for &s in samples {
        for _ in 0..cfg.n_nodes {
            layer.step(s);
        }
    }
    layer.into_state()
}

/// Runs one cold-started loop over the whole datapoint and returns the node
/// values after the final sample.
pub fn run_loop(
    samples: &[f64],
    cfg: &ReservoirConfig,
    mask: &SpreadMask,
    filter: &FilterKernel,
) -> Result<ReservoirState> {
    check_samples(samples)?;
    check_shapes(cfg, mask, filter)?;
    Ok(single_pass(samples, cfg, mask, filter))
}

/// First half gets the extra sample when the length is odd.
fn halves(samples: &[f64]) -> Result<(&[f64], &[f64])> {
    if samples.len() < 2 {
        return Err(invalid("datapoint", "split loop needs at least 2 samples"));
    }
    Ok(samples.split_at(samples.len().div_ceil(2)))
}

fn mean_of(a: ReservoirState, b: ReservoirState) -> ReservoirState {
    ReservoirState {
        values: a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| 0.5 * (x + y))
            .collect(),
    }
}

/// Processes the two halves of the datapoint in independent loops sharing
/// the same mask and returns the mean of their final states.
pub fn run_split_loop(
    samples: &[f64],
    cfg: &ReservoirConfig,
    mask: &SpreadMask,
    filter: &FilterKernel,
) -> Result<ReservoirState> {
    check_samples(samples)?;
    check_shapes(cfg, mask, filter)?;
    let (first, second) = halves(samples)?;
    Ok(mean_of(
        single_pass(first, cfg, mask, filter),
        single_pass(second, cfg, mask, filter),
    ))
}

fn stacked_pass(
    samples: &[f64],
    cfg: &ReservoirConfig,
    masks: (&SpreadMask, &SpreadMask),
    filter: &FilterKernel,
) -> ReservoirState {
    let mut first = LoopLayer::new(cfg, masks.0.chips(), filter.taps());
    let mut second = LoopLayer::new(cfg, masks.1.chips(), filter.taps());
    // The second loop sees the first loop's output one chip late, so it runs
    // one chip past the end of the first loop's stream.
    let mut upstream = 0.0;
    for &s in samples {
        for _ in 0..cfg.n_nodes {
            second.step(upstream);
            upstream = first.step(s);
        }
    }
    second.step(upstream);
    second.into_state()
}

/// Two loops in series: the second loop is driven by the first loop's node
/// stream delayed by one chip, spread by its own mask. Returns the second
/// loop's final state (mean over halves when `cfg.split`).
pub fn run_stacked_loops(
    samples: &[f64],
    cfg: &ReservoirConfig,
    masks: (&SpreadMask, &SpreadMask),
    filter: &FilterKernel,
) -> Result<ReservoirState> {
    if cfg.layers != 2 {
        return Err(invalid("layers", "stacked emulation requires layers = 2"));
    }
    check_samples(samples)?;
    check_shapes(cfg, masks.0, filter)?;
    if masks.1.len() != cfg.layer2_n_nodes {
        return Err(Error::DimensionMismatch(format!(
            "second mask has {} chips, config has {} second-layer nodes",
            masks.1.len(),
            cfg.layer2_n_nodes
        )));
    }
    if filter.len() > cfg.layer2_n_nodes {
        return Err(invalid("filter_taps", "filter longer than the second loop"));
    }
    if cfg.split {
        let (a, b) = halves(samples)?;
        Ok(mean_of(
            stacked_pass(a, cfg, masks, filter),
            stacked_pass(b, cfg, masks, filter),
        ))
    } else {
        Ok(stacked_pass(samples, cfg, masks, filter))
    }
}

/// A validated configuration together with its mask(s) and filter.
///
/// Immutable once built; share it freely across threads.
#[derive(Debug, Clone)]
pub struct Reservoir {
    config: ReservoirConfig,
    mask: SpreadMask,
    second_mask: Option<SpreadMask>,
    filter: FilterKernel,
}

impl Reservoir {
    pub fn new(config: ReservoirConfig) -> Result<Self> {
        config.validate()?;
        let mask = SpreadMask::new(config.n_nodes, config.seed);
        let second_mask =
            (config.layers == 2).then(|| SpreadMask::second_layer(config.layer2_n_nodes, config.seed));
        let filter = FilterKernel::exponential(config.filter_taps, config.filter_time_constant)?;
        Ok(Self {
            config,
            mask,
            second_mask,
            filter,
        })
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.config
    }

    pub fn mask(&self) -> &SpreadMask {
        &self.mask
    }

    pub fn filter(&self) -> &FilterKernel {
        &self.filter
    }

    pub fn state_len(&self) -> usize {
        self.config.state_len()
    }

    /// Final state for one datapoint, dispatching on `split` and `layers`.
    pub fn state(&self, samples: &[f64]) -> Result<ReservoirState> {
        let cfg = &self.config;
        match (&self.second_mask, cfg.split) {
            (Some(second), _) => run_stacked_loops(samples, cfg, (&self.mask, second), &self.filter),
            (None, true) => run_split_loop(samples, cfg, &self.mask, &self.filter),
            (None, false) => run_loop(samples, cfg, &self.mask, &self.filter),
        }
    }

    /// States for many datapoints, computed in parallel, returned in input
    /// order.
    pub fn states<S: AsRef<[f64]> + Sync>(&self, datapoints: &[S]) -> Result<Vec<ReservoirState>> {
        datapoints
            .par_iter()
            .map(|d| self.state(d.as_ref()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::make_filter;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toy_config(n: usize, taps: usize) -> ReservoirConfig {
        ReservoirConfig {
            n_nodes: n,
            filter_taps: taps,
            layer2_n_nodes: n,
            ..Default::default()
        }
    }

    #[test]
    fn zero_input_stays_at_zero() {
        for nl in [Nonlinearity::SinSquared, Nonlinearity::Tanh] {
            let cfg = ReservoirConfig {
                nonlinearity: nl,
                ..toy_config(32, 5)
            };
            let r = Reservoir::new(cfg).unwrap();
            let s = r.state(&[0.0; 20]).unwrap();
            assert!(s.values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn two_node_hand_example() {
        let cfg = ReservoirConfig {
            feedback_gain: 0.0,
            input_gain: 1.0,
            ..toy_config(2, 1)
        };
        let mask = SpreadMask::from_chips(vec![0.999_999_999_999, -0.999_999_999_999]).unwrap();
        let filter = make_filter(1, 1.0).unwrap();
        let s = run_loop(&[0.5], &cfg, &mask, &filter).unwrap();
        // sin^2(+-0.5) = 0.229849 (mask chips are a hair inside +-1)
        assert_abs_diff_eq!(s.values[0], 0.229_848_847_065_930_1, epsilon = 1e-9);
        assert_abs_diff_eq!(s.values[1], 0.229_848_847_065_930_1, epsilon = 1e-9);
    }

    #[test]
    fn full_scale_state_length() {
        let r = Reservoir::new(toy_config(600, 5)).unwrap();
        let data: Vec<f64> = (0..256).map(|i| (i as f64 * 0.1).sin().abs()).collect();
        assert_eq!(r.state(&data).unwrap().len(), 600);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = toy_config(8, 2);
        let mask = SpreadMask::new(8, 1);
        let short = SpreadMask::new(7, 1);
        let filter = make_filter(2, 1.0).unwrap();
        assert!(matches!(run_loop(&[], &cfg, &mask, &filter), Err(Error::Empty(_))));
        assert!(matches!(
            run_loop(&[0.1, f64::NAN], &cfg, &mask, &filter),
            Err(Error::NonFinite(1))
        ));
        assert!(matches!(
            run_loop(&[0.1], &cfg, &short, &filter),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(run_split_loop(&[0.1], &cfg, &mask, &filter).is_err());
        assert!(run_stacked_loops(&[0.1, 0.2], &cfg, (&mask, &mask), &filter).is_err());
    }

    #[test]
    fn split_with_identical_halves_equals_half_run() {
        let cfg = ReservoirConfig {
            split: true,
            ..toy_config(24, 3)
        };
        let mask = SpreadMask::new(24, 5);
        let filter = make_filter(3, 1.0).unwrap();
        let half = [0.3, 0.9, 0.1, 0.6];
        let full: Vec<f64> = half.iter().chain(half.iter()).copied().collect();
        let split = run_split_loop(&full, &cfg, &mask, &filter).unwrap();
        let single = run_loop(&half, &cfg, &mask, &filter).unwrap();
        assert_eq!(split, single);
    }

    #[test]
    fn split_is_mean_of_half_runs() {
        let cfg = ReservoirConfig {
            split: true,
            ..toy_config(20, 4)
        };
        let mask = SpreadMask::new(20, 9);
        let filter = make_filter(4, 1.0).unwrap();
        let data = [0.2, 0.7, 0.4, 0.9, 0.05, 0.5, 0.33];
        let split = run_split_loop(&data, &cfg, &mask, &filter).unwrap();
        let a = run_loop(&data[..4], &cfg, &mask, &filter).unwrap();
        let b = run_loop(&data[4..], &cfg, &mask, &filter).unwrap();
        for i in 0..20 {
            assert_abs_diff_eq!(split.values[i], 0.5 * (a.values[i] + b.values[i]), epsilon = 1e-15);
        }
    }

    #[test]
    fn split_state_has_half_size_length() {
        let cfg = ReservoirConfig {
            split: true,
            ..toy_config(200, 5)
        };
        let r = Reservoir::new(cfg).unwrap();
        assert_eq!(r.state(&vec![0.5; 256]).unwrap().len(), 200);
    }

    #[test]
    fn stacked_zero_input() {
        let cfg = ReservoirConfig {
            layers: 2,
            layer2_n_nodes: 16,
            ..toy_config(32, 3)
        };
        let r = Reservoir::new(cfg).unwrap();
        let s = r.state(&[0.0; 6]).unwrap();
        assert_eq!(s.len(), 16);
        assert!(s.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn memoryless_degeneracy() {
        let cfg = ReservoirConfig {
            feedback_gain: 0.0,
            input_gain: 0.8,
            ..toy_config(12, 1)
        };
        let mask = SpreadMask::new(12, 21);
        let filter = make_filter(1, 1.0).unwrap();
        let s = run_loop(&[0.4, 0.1, 0.75], &cfg, &mask, &filter).unwrap();
        for (v, m) in s.values.iter().zip(mask.chips()) {
            assert_abs_diff_eq!(*v, Nonlinearity::SinSquared.apply(0.8 * 0.75 * m), epsilon = 1e-15);
        }
    }

    #[test]
    fn accumulate_mode_adds_prior_round_trip() {
        let base = ReservoirConfig {
            feedback_gain: 0.0,
            ..toy_config(4, 1)
        };
        let acc = ReservoirConfig {
            accumulate_prior_state: true,
            ..base.clone()
        };
        let mask = SpreadMask::new(4, 2);
        let filter = make_filter(1, 1.0).unwrap();
        let data = [0.6, 0.2];
        let plain_first = run_loop(&data[..1], &base, &mask, &filter).unwrap();
        let plain_last = run_loop(&data, &base, &mask, &filter).unwrap();
        let accumulated = run_loop(&data, &acc, &mask, &filter).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(
                accumulated.values[i],
                plain_first.values[i] + plain_last.values[i],
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn parallel_states_match_sequential() {
        let r = Reservoir::new(toy_config(40, 5)).unwrap();
        let data: Vec<Vec<f64>> = (0..16)
            .map(|k| (0..30).map(|i| ((i * (k + 1)) as f64 * 0.37).cos().abs()).collect())
            .collect();
        let par = r.states(&data).unwrap();
        for (d, s) in data.iter().zip(&par) {
            assert_eq!(&r.state(d).unwrap(), s);
        }
    }

    proptest! {
        #[test]
        fn sin_squared_states_stay_in_unit_interval(
            data in prop::collection::vec(0.0f64..4.0, 1..12),
            n in 5usize..24,
            nu in 0.0f64..3.0,
            eta in 0.0f64..3.0,
            seed in any::<u64>(),
        ) {
            let cfg = ReservoirConfig {
                n_nodes: n,
                input_gain: nu,
                feedback_gain: eta,
                filter_taps: 5,
                seed,
                ..Default::default()
            };
            let r = Reservoir::new(cfg).unwrap();
            let s = r.state(&data).unwrap();
            prop_assert!(s.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn mask_permutation_permutes_memoryless_state(
            s in 0.0f64..2.0,
            seed in any::<u64>(),
            rot in 0usize..10,
        ) {
            let cfg = ReservoirConfig {
                n_nodes: 10,
                feedback_gain: 0.0,
                filter_taps: 1,
                ..Default::default()
            };
            let filter = make_filter(1, 1.0).unwrap();
            let mask = SpreadMask::new(10, seed);
            let mut rotated_chips = mask.chips().to_vec();
            rotated_chips.rotate_left(rot);
            let rotated = SpreadMask::from_chips(rotated_chips).unwrap();
            let a = run_loop(&[0.3, s], &cfg, &mask, &filter).unwrap();
            let b = run_loop(&[0.3, s], &cfg, &rotated, &filter).unwrap();
            let mut expected = a.values.clone();
            expected.rotate_left(rot);
            prop_assert_eq!(expected, b.values);
        }
    }
}
