//! Flat `key = value` run configuration.
//!
//! One setting per line; `#` starts a comment; lists are comma separated.
//! Every key maps onto one field of [`RunConfig`]. Unknown keys are errors.
//!
//! ```text
//! # reservoir
//! n_nodes = 600
//! input_gain = 0.5
//! feedback_gain = 0.5
//! nonlinearity = sin_squared        # or tanh
//! filter_taps = 5
//! filter_time_constant = 1
//! accumulate_prior_state = false
//! split = false
//! layers = 1
//! layer2_n_nodes = 600
//! seed = 7
//!
//! # readout and evaluation
//! lambda = auto                     # or a number
//! lambda_grid = 1e-8, 1e-6, 1e-4, 1e-2, 1, 100
//! train_fraction = 0.8
//! split_seed = 1
//! train_per_class = all             # or a cap
//! normalization = none              # none | per_datapoint
//! intercept = false
//! baseline = false                  # also report raw-feature ridge accuracy
//!
//! # synthetic data (synth.*), corruption (corruption.*),
//! # sweep grids (sweep.*) and the Mackey-Glass benchmark (mackey.*)
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::reservoir::ReservoirConfig;
use crate::rng;
use crate::signal::{CorruptionSpec, Normalization};
use crate::synth::{MackeyGlassSpec, SynthSpec};

pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2];
/// Fixed regularizer used where no validation split is affordable.
pub const QUICK_LAMBDA: f64 = 1e-4;

/// Grid for the hyperparameter sweep. An empty list keeps the base value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepGrid {
    pub input_gain: Vec<f64>,
    pub feedback_gain: Vec<f64>,
    pub n_nodes: Vec<usize>,
    pub filter_taps: Vec<usize>,
    pub lambda: Vec<f64>,
    pub split: Vec<bool>,
    pub layers: Vec<usize>,
    /// Training budget per class for each cell.
    pub train_per_class: Option<usize>,
}

impl SweepGrid {
    /// The (ν, η) ∈ {0.1, 0.2, ..., 1.0}² grid.
    pub fn gains() -> Self {
        let g: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        Self {
            input_gain: g.clone(),
            feedback_gain: g,
            train_per_class: Some(100),
            ..Default::default()
        }
    }

    pub fn cell_count(&self) -> usize {
        [
            self.input_gain.len(),
            self.feedback_gain.len(),
            self.n_nodes.len(),
            self.filter_taps.len(),
            self.lambda.len(),
            self.split.len(),
            self.layers.len(),
        ]
        .iter()
        .map(|&n| n.max(1))
        .product()
    }
}

/// Settings of the one-step-ahead Mackey-Glass benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct MackeyBench {
    pub series: MackeyGlassSpec,
    /// Samples per sliding-window datapoint.
    pub window: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub lambda: f64,
    /// Also run the two-layer stack and report it.
    pub compare_layers: bool,
}

impl Default for MackeyBench {
    fn default() -> Self {
        Self {
            series: MackeyGlassSpec::default(),
            window: 16,
            n_train: 2000,
            n_test: 500,
            lambda: 1e-8,
            compare_layers: false,
        }
    }
}

/// Reservoir defaults for the Mackey-Glass benchmark.
pub fn mackey_reservoir() -> ReservoirConfig {
    ReservoirConfig {
        n_nodes: 400,
        layer2_n_nodes: 400,
        input_gain: 0.5,
        feedback_gain: 0.5,
        ..ReservoirConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub reservoir: ReservoirConfig,
    /// `None` selects λ on a held-out split over `lambda_grid`.
    pub lambda: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub train_per_class: Option<usize>,
    pub normalization: Normalization,
    pub intercept: bool,
    pub baseline: bool,
    pub synth: SynthSpec,
    pub corruption: Option<CorruptionSpec>,
    pub sweep: SweepGrid,
    pub mackey: MackeyBench,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            reservoir: ReservoirConfig::default(),
            lambda: None,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            train_fraction: 0.8,
            split_seed: 1,
            train_per_class: None,
            normalization: Normalization::None,
            intercept: false,
            baseline: false,
            synth: SynthSpec::default(),
            corruption: None,
            sweep: SweepGrid::gains(),
            mackey: MackeyBench::default(),
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        reason: format!("cannot parse `{value}` for `{key}`"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config {
            line,
            reason: format!("expected a boolean for `{key}`, got `{value}`"),
        }),
    }
}

fn parse_list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(line, key, s))
        .collect()
}

fn parse_bool_list(line: usize, key: &str, value: &str) -> Result<Vec<bool>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_bool(line, key, s))
        .collect()
}

fn parse_optional_count(line: usize, key: &str, value: &str) -> Result<Option<usize>> {
    if value == "all" {
        Ok(None)
    } else {
        parse(line, key, value).map(Some)
    }
}

fn list<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_onto(Self::default(), text)
    }

    /// Applies the settings in `text` on top of `base`.
    pub fn parse_onto(mut base: Self, text: &str) -> Result<Self> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                reason: "expected `key = value`".into(),
            })?;
            base.set(line, key.trim(), value.trim())?;
        }
        base.validate()?;
        Ok(base)
    }

    fn corruption_mut(&mut self) -> &mut CorruptionSpec {
        self.corruption.get_or_insert_with(CorruptionSpec::default)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let r = &mut self.reservoir;
        match key {
            "n_nodes" => r.n_nodes = parse(line, key, value)?,
            "input_gain" => r.input_gain = parse(line, key, value)?,
            "feedback_gain" => r.feedback_gain = parse(line, key, value)?,
            "nonlinearity" => {
                r.nonlinearity = value.parse().map_err(|reason| Error::Config { line, reason })?
            }
            "filter_taps" => r.filter_taps = parse(line, key, value)?,
            "filter_time_constant" => r.filter_time_constant = parse(line, key, value)?,
            "accumulate_prior_state" => r.accumulate_prior_state = parse_bool(line, key, value)?,
            "split" => r.split = parse_bool(line, key, value)?,
            "layers" => r.layers = parse(line, key, value)?,
            "layer2_n_nodes" => r.layer2_n_nodes = parse(line, key, value)?,
            "seed" => r.seed = parse(line, key, value)?,

            "lambda" => {
                self.lambda = if value == "auto" {
                    None
                } else {
                    Some(parse(line, key, value)?)
                }
            }
            "lambda_grid" => self.lambda_grid = parse_list(line, key, value)?,
            "train_fraction" => self.train_fraction = parse(line, key, value)?,
            "split_seed" => self.split_seed = parse(line, key, value)?,
            "train_per_class" => self.train_per_class = parse_optional_count(line, key, value)?,
            "normalization" => {
                self.normalization = value.parse().map_err(|reason| Error::Config { line, reason })?
            }
            "intercept" => self.intercept = parse_bool(line, key, value)?,
            "baseline" => self.baseline = parse_bool(line, key, value)?,

            "synth.num_devices" => self.synth.num_devices = parse(line, key, value)?,
            "synth.bursts_per_device" => self.synth.bursts_per_device = parse(line, key, value)?,
            "synth.payload" => {
                self.synth.payload = value.parse().map_err(|reason| Error::Config { line, reason })?
            }
            "synth.seed" => self.synth.seed = parse(line, key, value)?,
            "synth.sample_rate_hz" => self.synth.sample_rate_hz = parse(line, key, value)?,
            "synth.capture_snr_db" => self.synth.capture_snr_db = parse(line, key, value)?,
            "synth.channel_gain_jitter_db" => self.synth.channel_gain_jitter_db = parse(line, key, value)?,
            "synth.cfo_hz" => self.synth.ranges.cfo_hz = parse(line, key, value)?,
            "synth.gain_imbalance_db" => self.synth.ranges.gain_imbalance_db = parse(line, key, value)?,
            "synth.phase_skew_rad" => self.synth.ranges.phase_skew_rad = parse(line, key, value)?,
            "synth.a1_min" => self.synth.ranges.a1.0 = parse(line, key, value)?,
            "synth.a1_max" => self.synth.ranges.a1.1 = parse(line, key, value)?,
            "synth.a3_min" => self.synth.ranges.a3_min = parse(line, key, value)?,
            "synth.a5_min" => self.synth.ranges.a5_min = parse(line, key, value)?,
            "synth.ramp_min" => self.synth.ranges.ramp_samples.0 = parse(line, key, value)?,
            "synth.ramp_max" => self.synth.ranges.ramp_samples.1 = parse(line, key, value)?,
            "synth.min_separation" => self.synth.ranges.min_separation = parse(line, key, value)?,

            "corruption" => {
                if parse_bool(line, key, value)? {
                    self.corruption_mut();
                } else {
                    self.corruption = None;
                }
            }
            "corruption.jitter_max_hz" => self.corruption_mut().jitter_max_hz = parse(line, key, value)?,
            "corruption.snr_db_low" => self.corruption_mut().snr_db_range.0 = parse(line, key, value)?,
            "corruption.snr_db_high" => self.corruption_mut().snr_db_range.1 = parse(line, key, value)?,
            "corruption.seed" => self.corruption_mut().seed = parse(line, key, value)?,

            "sweep.input_gain" => self.sweep.input_gain = parse_list(line, key, value)?,
            "sweep.feedback_gain" => self.sweep.feedback_gain = parse_list(line, key, value)?,
            "sweep.n_nodes" => self.sweep.n_nodes = parse_list(line, key, value)?,
            "sweep.filter_taps" => self.sweep.filter_taps = parse_list(line, key, value)?,
            "sweep.lambda" => self.sweep.lambda = parse_list(line, key, value)?,
            "sweep.split" => self.sweep.split = parse_bool_list(line, key, value)?,
            "sweep.layers" => self.sweep.layers = parse_list(line, key, value)?,
            "sweep.train_per_class" => self.sweep.train_per_class = parse_optional_count(line, key, value)?,

            "mackey.beta" => self.mackey.series.beta = parse(line, key, value)?,
            "mackey.gamma" => self.mackey.series.gamma = parse(line, key, value)?,
            "mackey.exponent" => self.mackey.series.exponent = parse(line, key, value)?,
            "mackey.delay_tau" => self.mackey.series.delay_tau = parse(line, key, value)?,
            "mackey.step" => self.mackey.series.step = parse(line, key, value)?,
            "mackey.sample_every" => self.mackey.series.sample_every = parse(line, key, value)?,
            "mackey.transient_steps" => self.mackey.series.transient_steps = parse(line, key, value)?,
            "mackey.initial" => self.mackey.series.initial = parse(line, key, value)?,
            "mackey.window" => self.mackey.window = parse(line, key, value)?,
            "mackey.train" => self.mackey.n_train = parse(line, key, value)?,
            "mackey.test" => self.mackey.n_test = parse(line, key, value)?,
            "mackey.lambda" => self.mackey.lambda = parse(line, key, value)?,
            "mackey.compare_layers" => self.mackey.compare_layers = parse_bool(line, key, value)?,

            _ => {
                return Err(Error::Config {
                    line,
                    reason: format!("unknown key `{key}`"),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.reservoir.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config {
                line: 0,
                reason: "train_fraction must lie in (0, 1)".into(),
            });
        }
        if self.lambda.is_none() && self.lambda_grid.is_empty() {
            return Err(Error::Config {
                line: 0,
                reason: "lambda = auto needs a non-empty lambda_grid".into(),
            });
        }
        if self.normalization == Normalization::Global {
            return Err(Error::Config {
                line: 0,
                reason: "global normalization is applied when a dataset is built; use none or per_datapoint".into(),
            });
        }
        if let Some(c) = &self.corruption {
            c.validate()?;
        }
        Ok(())
    }

    /// Canonical text of everything that shapes the feature vector: the
    /// reservoir, its input normalization and the intercept column.
    pub fn feature_text(&self) -> String {
        let r = &self.reservoir;
        let mut s = String::new();
        let _ = writeln!(s, "n_nodes = {}", r.n_nodes);
        let _ = writeln!(s, "input_gain = {:?}", r.input_gain);
        let _ = writeln!(s, "feedback_gain = {:?}", r.feedback_gain);
        let _ = writeln!(s, "nonlinearity = {}", r.nonlinearity.name());
        let _ = writeln!(s, "filter_taps = {}", r.filter_taps);
        let _ = writeln!(s, "filter_time_constant = {:?}", r.filter_time_constant);
        let _ = writeln!(s, "accumulate_prior_state = {}", r.accumulate_prior_state);
        let _ = writeln!(s, "split = {}", r.split);
        let _ = writeln!(s, "layers = {}", r.layers);
        let _ = writeln!(s, "layer2_n_nodes = {}", r.layer2_n_nodes);
        let _ = writeln!(s, "seed = {}", r.seed);
        let _ = writeln!(s, "normalization = {}", self.normalization.name());
        let _ = writeln!(s, "intercept = {}", self.intercept);
        s
    }

    /// FNV-1a of [`feature_text`](Self::feature_text); stored in weight
    /// artifacts so inference can refuse a mismatched configuration.
    pub fn fingerprint(&self) -> u64 {
        rng::fnv1a(self.feature_text().as_bytes())
    }

    /// Full canonical echo, parseable by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = self.feature_text();
        let opt = |v: Option<usize>| v.map_or("all".to_string(), |n| n.to_string());
        let _ = writeln!(
            s,
            "lambda = {}",
            self.lambda.map_or("auto".to_string(), |l| format!("{l:?}"))
        );
        let _ = writeln!(s, "lambda_grid = {}", list(&self.lambda_grid));
        let _ = writeln!(s, "train_fraction = {:?}", self.train_fraction);
        let _ = writeln!(s, "split_seed = {}", self.split_seed);
        let _ = writeln!(s, "train_per_class = {}", opt(self.train_per_class));
        let _ = writeln!(s, "baseline = {}", self.baseline);
        let sy = &self.synth;
        let _ = writeln!(s, "synth.num_devices = {}", sy.num_devices);
        let _ = writeln!(s, "synth.bursts_per_device = {}", sy.bursts_per_device);
        let _ = writeln!(s, "synth.payload = {}", sy.payload.name());
        let _ = writeln!(s, "synth.seed = {}", sy.seed);
        let _ = writeln!(s, "synth.sample_rate_hz = {:?}", sy.sample_rate_hz);
        let _ = writeln!(s, "synth.capture_snr_db = {:?}", sy.capture_snr_db);
        let _ = writeln!(s, "synth.channel_gain_jitter_db = {:?}", sy.channel_gain_jitter_db);
        let _ = writeln!(s, "synth.cfo_hz = {:?}", sy.ranges.cfo_hz);
        let _ = writeln!(s, "synth.gain_imbalance_db = {:?}", sy.ranges.gain_imbalance_db);
        let _ = writeln!(s, "synth.phase_skew_rad = {:?}", sy.ranges.phase_skew_rad);
        let _ = writeln!(s, "synth.a1_min = {:?}", sy.ranges.a1.0);
        let _ = writeln!(s, "synth.a1_max = {:?}", sy.ranges.a1.1);
        let _ = writeln!(s, "synth.a3_min = {:?}", sy.ranges.a3_min);
        let _ = writeln!(s, "synth.a5_min = {:?}", sy.ranges.a5_min);
        let _ = writeln!(s, "synth.ramp_min = {}", sy.ranges.ramp_samples.0);
        let _ = writeln!(s, "synth.ramp_max = {}", sy.ranges.ramp_samples.1);
        let _ = writeln!(s, "synth.min_separation = {:?}", sy.ranges.min_separation);
        match &self.corruption {
            None => {
                let _ = writeln!(s, "corruption = false");
            }
            Some(c) => {
                let _ = writeln!(s, "corruption = true");
                let _ = writeln!(s, "corruption.jitter_max_hz = {:?}", c.jitter_max_hz);
                let _ = writeln!(s, "corruption.snr_db_low = {:?}", c.snr_db_range.0);
                let _ = writeln!(s, "corruption.snr_db_high = {:?}", c.snr_db_range.1);
                let _ = writeln!(s, "corruption.seed = {}", c.seed);
            }
        }
        let g = &self.sweep;
        let _ = writeln!(s, "sweep.input_gain = {}", list(&g.input_gain));
        let _ = writeln!(s, "sweep.feedback_gain = {}", list(&g.feedback_gain));
        let _ = writeln!(s, "sweep.n_nodes = {}", list(&g.n_nodes));
        let _ = writeln!(s, "sweep.filter_taps = {}", list(&g.filter_taps));
        let _ = writeln!(s, "sweep.lambda = {}", list(&g.lambda));
        let _ = writeln!(s, "sweep.split = {}", list(&g.split));
        let _ = writeln!(s, "sweep.layers = {}", list(&g.layers));
        let _ = writeln!(s, "sweep.train_per_class = {}", opt(g.train_per_class));
        let m = &self.mackey;
        let _ = writeln!(s, "mackey.beta = {:?}", m.series.beta);
        let _ = writeln!(s, "mackey.gamma = {:?}", m.series.gamma);
        let _ = writeln!(s, "mackey.exponent = {:?}", m.series.exponent);
        let _ = writeln!(s, "mackey.delay_tau = {:?}", m.series.delay_tau);
        let _ = writeln!(s, "mackey.step = {:?}", m.series.step);
        let _ = writeln!(s, "mackey.sample_every = {}", m.series.sample_every);
        let _ = writeln!(s, "mackey.transient_steps = {}", m.series.transient_steps);
        let _ = writeln!(s, "mackey.initial = {:?}", m.series.initial);
        let _ = writeln!(s, "mackey.window = {}", m.window);
        let _ = writeln!(s, "mackey.train = {}", m.n_train);
        let _ = writeln!(s, "mackey.test = {}", m.n_test);
        let _ = writeln!(s, "mackey.lambda = {:?}", m.lambda);
        let _ = writeln!(s, "mackey.compare_layers = {}", m.compare_layers);
        s
    }
}
