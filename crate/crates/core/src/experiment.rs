//! End-to-end runs built from the library pieces: train and evaluate,
//! inference against a stored readout, hyperparameter sweeps, the
//! Mackey-Glass benchmark and the quick classifier used by saliency maps.
//!
//! Every report has two renderings: a fixed-width table for a terminal and
//! `key = value` lines for machines. Wall-clock lines are prefixed with
//! `timing.` and are the only part of a report that varies between runs.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::config::{MackeyBench, RunConfig, QUICK_LAMBDA};
use crate::error::{invalid, Error, Result};
use crate::readout::{
    accuracy, ridge_regression, ridge_train, select_lambda, stratified_split, LabelMatrix, ReadoutWeights,
    StateMatrix,
};
use crate::reservoir::{Reservoir, ReservoirConfig, ReservoirState};
use crate::signal::format::Dataset;
use crate::signal::{apply_normalization, normalize_global, Datapoint, Normalization};
use crate::synth::gen_mackey_glass;

/// Confusion counts, `counts[truth][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_pairs(num_classes: usize, predicted: &[usize], truth: &[usize]) -> Result<Self> {
        let mut c = Self::new(num_classes);
        for (&p, &t) in predicted.iter().zip(truth) {
            if p >= num_classes || t >= num_classes {
                return Err(invalid("label", format!("class index out of range for {num_classes} classes")));
            }
            c.counts[t][p] += 1;
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// trace / total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.correct() as f64 / total as f64
        }
    }
}

/// One inference result; `truth` is `None` for unlabeled datapoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub index: usize,
    pub predicted: usize,
    pub truth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub command: String,
    /// Equals `confusion.accuracy()`.
    pub accuracy: f64,
    pub confusion: Confusion,
    pub seeds: Vec<(String, u64)>,
    pub config_echo: String,
    /// Additional deterministic results (λ, counts, baseline accuracy, ...).
    pub fields: Vec<(String, String)>,
    pub predictions: Vec<Prediction>,
    /// Seconds per phase.
    pub timings: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24}{:>12}", "command", self.command);
        let _ = writeln!(s, "{:<24}{:>12.4}", "accuracy", self.accuracy);
        let _ = writeln!(s, "{:<24}{:>12}", "correct", self.confusion.correct());
        let _ = writeln!(s, "{:<24}{:>12}", "total", self.confusion.total());
        for (k, v) in &self.fields {
            let _ = writeln!(s, "{k:<24}{v:>12}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>6} {:>8} {:>8} {:>8}", "class", "count", "correct", "recall");
        for (i, row) in self.confusion.counts.iter().enumerate() {
            let n: u64 = row.iter().sum();
            let recall = if n == 0 { 0.0 } else { row[i] as f64 / n as f64 };
            let _ = writeln!(s, "{i:>6} {n:>8} {:>8} {recall:>8.4}", row[i]);
        }
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "accuracy = {:.6}", self.accuracy);
        let _ = writeln!(s, "correct = {}", self.confusion.correct());
        let _ = writeln!(s, "total = {}", self.confusion.total());
        for (k, v) in &self.seeds {
            let _ = writeln!(s, "seed.{k} = {v}");
        }
        for (k, v) in &self.fields {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (i, row) in self.confusion.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "confusion.{i} = {}", cells.join(" "));
        }
        for p in &self.predictions {
            let truth = p.truth.map_or("-".to_string(), |t| t.to_string());
            let _ = writeln!(s, "prediction.{} = {} {}", p.index, p.predicted, truth);
        }
        for line in self.config_echo.lines() {
            let _ = writeln!(s, "config.{line}");
        }
        for (k, v) in &self.timings {
            let _ = writeln!(s, "timing.{k} = {v:.6}");
        }
        s
    }
}

pub struct TrainOutcome {
    pub report: EvalReport,
    pub weights: ReadoutWeights,
}

struct Stopwatch {
    last: Instant,
    laps: Vec<(String, f64)>,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            last: Instant::now(),
            laps: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.laps.push((name.to_string(), (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

/// Caps each class at `cap` members, keeping the earliest indices.
fn cap_per_class(indices: &[usize], labels: &[usize], num_classes: usize, cap: Option<usize>) -> Vec<usize> {
    let Some(cap) = cap else {
        return indices.to_vec();
    };
    let mut seen = vec![0usize; num_classes];
    indices
        .iter()
        .copied()
        .filter(|&i| {
            let c = &mut seen[labels[i]];
            *c += 1;
            *c <= cap
        })
        .collect()
}

fn prepared(dataset: &Dataset, indices: &[usize], mode: Normalization) -> (Vec<Datapoint>, usize) {
    let mut points: Vec<Datapoint> = indices.iter().map(|&i| dataset.datapoints[i].clone()).collect();
    let flagged = apply_normalization(&mut points, mode);
    (points, flagged)
}

fn features(states: &[ReservoirState], intercept: bool) -> Result<StateMatrix> {
    let m = StateMatrix::from_states(states)?;
    Ok(if intercept { m.with_constant_column() } else { m })
}

fn raw_features(points: &[Datapoint], intercept: bool) -> Result<StateMatrix> {
    let m = StateMatrix::from_rows(points)?;
    Ok(if intercept { m.with_constant_column() } else { m })
}

/// Fits a readout on `x_train` and returns it with the test predictions.
fn fit_and_predict(
    x_train: &StateMatrix,
    y_train: &LabelMatrix,
    x_test: &StateMatrix,
    cfg: &RunConfig,
) -> Result<(ReadoutWeights, Vec<usize>)> {
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => select_lambda(x_train, y_train, &cfg.lambda_grid, cfg.split_seed)?,
    };
    let weights = ridge_train(x_train, y_train, lambda)?;
    let predicted = weights.predict(x_test)?;
    Ok((weights, predicted))
}

fn check_reservoir_fits(dataset: &Dataset, cfg: &ReservoirConfig) -> Result<()> {
    if dataset.length == 0 {
        return Err(Error::Empty("datapoints"));
    }
    if cfg.split && dataset.length < 2 {
        return Err(invalid("split", "datapoints need at least 2 samples to split"));
    }
    Ok(())
}

/// Seeded stratified split, reservoir states, ridge readout and test
/// evaluation. The readout carries `cfg.fingerprint()`.
pub fn train_eval(dataset: &Dataset, cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_reservoir_fits(dataset, &cfg.reservoir)?;
    let mut clock = Stopwatch::start();
    let labels = dataset.labels()?;
    let q = dataset.num_classes;
    let (train, test) = stratified_split(&labels, q, cfg.train_fraction, cfg.split_seed)?;
    let train = cap_per_class(&train, &labels, q, cfg.train_per_class);
    if test.is_empty() {
        return Err(invalid("train_fraction", "leaves no test datapoints"));
    }
    let (train_points, flagged_train) = prepared(dataset, &train, cfg.normalization);
    let (test_points, flagged_test) = prepared(dataset, &test, cfg.normalization);
    let train_truth: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let test_truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let y_train = LabelMatrix::from_labels(&train_truth, q)?;
    clock.lap("prepare_s");

    let reservoir = Reservoir::new(cfg.reservoir.clone())?;
    let train_states = reservoir.states(&train_points)?;
    let test_states = reservoir.states(&test_points)?;
    clock.lap("states_s");

    let x_train = features(&train_states, cfg.intercept)?;
    let x_test = features(&test_states, cfg.intercept)?;
    let (mut weights, predicted) = fit_and_predict(&x_train, &y_train, &x_test, cfg)?;
    weights.config_hash = cfg.fingerprint();
    clock.lap("readout_s");

    let confusion = Confusion::from_pairs(q, &predicted, &test_truth)?;
    let mut fields = vec![
        ("num_classes".to_string(), q.to_string()),
        ("n_train".to_string(), train.len().to_string()),
        ("n_test".to_string(), test.len().to_string()),
        ("n_features".to_string(), weights.n_features().to_string()),
        ("lambda".to_string(), format!("{:e}", weights.lambda)),
        ("normalization".to_string(), cfg.normalization.name().to_string()),
        ("normalization_flagged".to_string(), (flagged_train + flagged_test).to_string()),
        ("config_hash".to_string(), format!("{:016x}", weights.config_hash)),
    ];
    if cfg.baseline {
        let xr_train = raw_features(&train_points, cfg.intercept)?;
        let xr_test = raw_features(&test_points, cfg.intercept)?;
        let (raw_weights, raw_predicted) = fit_and_predict(&xr_train, &y_train, &xr_test, cfg)?;
        let raw_acc = accuracy(&raw_predicted, &test_truth);
        fields.push(("raw_accuracy".to_string(), format!("{raw_acc:.6}")));
        fields.push(("raw_lambda".to_string(), format!("{:e}", raw_weights.lambda)));
        fields.push((
            "accuracy_gain_over_raw".to_string(),
            format!("{:.6}", confusion.accuracy() - raw_acc),
        ));
        clock.lap("baseline_s");
    }

    let report = EvalReport {
        command: "train".to_string(),
        accuracy: confusion.accuracy(),
        confusion,
        seeds: vec![
            ("reservoir".to_string(), cfg.reservoir.seed),
            ("split".to_string(), cfg.split_seed),
        ],
        config_echo: cfg.to_text(),
        fields,
        predictions: Vec::new(),
        timings: clock.laps,
    };
    Ok(TrainOutcome { report, weights })
}

/// Applies stored weights to every datapoint. The weights must have been
/// trained under a configuration with the same fingerprint and shape.
pub fn evaluate(dataset: &Dataset, weights: &ReadoutWeights, cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    check_reservoir_fits(dataset, &cfg.reservoir)?;
    let expected_hash = cfg.fingerprint();
    if weights.config_hash != expected_hash {
        return Err(Error::ArtifactMismatch(format!(
            "weights were trained with configuration {:016x}, current configuration is {expected_hash:016x}",
            weights.config_hash
        )));
    }
    let n_features = cfg.reservoir.state_len() + usize::from(cfg.intercept);
    if weights.n_features() != n_features {
        return Err(Error::ArtifactMismatch(format!(
            "weights expect {} features, configuration produces {n_features}",
            weights.n_features()
        )));
    }
    let q = weights.n_outputs();
    if dataset.num_classes > q {
        return Err(Error::ArtifactMismatch(format!(
            "dataset has {} classes, weights score {q}",
            dataset.num_classes
        )));
    }
    let mut clock = Stopwatch::start();
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (points, flagged) = prepared(dataset, &all, cfg.normalization);
    let reservoir = Reservoir::new(cfg.reservoir.clone())?;
    let states = reservoir.states(&points)?;
    clock.lap("states_s");
    let predicted = weights.predict(&features(&states, cfg.intercept)?)?;
    clock.lap("readout_s");

    let mut confusion = Confusion::new(q);
    let mut predictions = Vec::with_capacity(points.len());
    for (i, (p, d)) in predicted.iter().zip(&points).enumerate() {
        if let Some(t) = d.label {
            confusion.counts[t][*p] += 1;
        }
        predictions.push(Prediction {
            index: i,
            predicted: *p,
            truth: d.label,
        });
    }
    Ok(EvalReport {
        command: "infer".to_string(),
        accuracy: confusion.accuracy(),
        confusion,
        seeds: vec![("reservoir".to_string(), cfg.reservoir.seed)],
        config_echo: cfg.to_text(),
        fields: vec![
            ("n_datapoints".to_string(), points.len().to_string()),
            ("lambda".to_string(), format!("{:e}", weights.lambda)),
            ("normalization_flagged".to_string(), flagged.to_string()),
            ("config_hash".to_string(), format!("{expected_hash:016x}")),
        ],
        predictions,
        timings: clock.laps,
    })
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    /// Position in the row-major grid enumeration.
    pub index: usize,
    pub input_gain: f64,
    pub feedback_gain: f64,
    pub n_nodes: usize,
    pub filter_taps: usize,
    pub split: bool,
    pub layers: usize,
    /// λ used (fixed or selected); `None` when the cell failed.
    pub lambda: Option<f64>,
    pub accuracy: f64,
    /// Error text for a cell that could not be trained.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Best first: accuracy descending, then grid index ascending.
    pub ranked: Vec<SweepCell>,
    pub train_per_class: Option<usize>,
    pub seconds: f64,
}

impl SweepReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4} {:>5} {:>6} {:>6} {:>6} {:>4} {:>5} {:>6} {:>10} {:>9}",
            "rank", "cell", "nu", "eta", "N", "F", "split", "layers", "lambda", "accuracy"
        );
        for (rank, c) in self.ranked.iter().enumerate() {
            let lambda = c.lambda.map_or("-".to_string(), |l| format!("{l:.1e}"));
            let _ = writeln!(
                s,
                "{:>4} {:>5} {:>6.3} {:>6.3} {:>6} {:>4} {:>5} {:>6} {:>10} {:>9.4}",
                rank + 1,
                c.index,
                c.input_gain,
                c.feedback_gain,
                c.n_nodes,
                c.filter_taps,
                c.split,
                c.layers,
                lambda,
                c.accuracy
            );
        }
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = sweep");
        let _ = writeln!(s, "cells = {}", self.ranked.len());
        let _ = writeln!(
            s,
            "train_per_class = {}",
            self.train_per_class.map_or("all".to_string(), |n| n.to_string())
        );
        for (rank, c) in self.ranked.iter().enumerate() {
            let lambda = c.lambda.map_or("-".to_string(), |l| format!("{l:e}"));
            let _ = writeln!(
                s,
                "rank.{} = cell {} input_gain {} feedback_gain {} n_nodes {} filter_taps {} split {} layers {} lambda {} accuracy {:.6}{}",
                rank + 1,
                c.index,
                c.input_gain,
                c.feedback_gain,
                c.n_nodes,
                c.filter_taps,
                c.split,
                c.layers,
                lambda,
                c.accuracy,
                c.failure.as_ref().map_or(String::new(), |f| format!(" failed {f}"))
            );
        }
        let _ = writeln!(s, "timing.total_s = {:.6}", self.seconds);
        s
    }
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Configurations of every grid cell, in enumeration order.
pub fn sweep_cells(cfg: &RunConfig) -> Vec<RunConfig> {
    let g = &cfg.sweep;
    let r = &cfg.reservoir;
    let lambdas: Vec<Option<f64>> = if g.lambda.is_empty() {
        vec![cfg.lambda]
    } else {
        g.lambda.iter().copied().map(Some).collect()
    };
    let mut cells = Vec::with_capacity(g.cell_count());
    for &nu in &axis(&g.input_gain, r.input_gain) {
        for &eta in &axis(&g.feedback_gain, r.feedback_gain) {
            for &n in &axis(&g.n_nodes, r.n_nodes) {
                for &f in &axis(&g.filter_taps, r.filter_taps) {
                    for &lambda in &lambdas {
                        for &split in &axis(&g.split, r.split) {
                            for &layers in &axis(&g.layers, r.layers) {
                                let mut c = cfg.clone();
                                c.reservoir.input_gain = nu;
                                c.reservoir.feedback_gain = eta;
                                c.reservoir.n_nodes = n;
                                c.reservoir.filter_taps = f;
                                c.reservoir.split = split;
                                c.reservoir.layers = layers;
                                c.lambda = lambda;
                                c.baseline = false;
                                c.train_per_class = g.train_per_class.or(cfg.train_per_class);
                                cells.push(c);
                            }
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Trains and scores every grid cell with the same split seed. A cell that
/// cannot be trained ranks with accuracy 0 and records why.
pub fn sweep(dataset: &Dataset, cfg: &RunConfig) -> Result<SweepReport> {
    let start = Instant::now();
    let cells = sweep_cells(cfg);
    if cells.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let mut out = Vec::with_capacity(cells.len());
    for (index, c) in cells.iter().enumerate() {
        let r = &c.reservoir;
        let mut cell = SweepCell {
            index,
            input_gain: r.input_gain,
            feedback_gain: r.feedback_gain,
            n_nodes: r.n_nodes,
            filter_taps: r.filter_taps,
            split: r.split,
            layers: r.layers,
            lambda: None,
            accuracy: 0.0,
            failure: None,
        };
        match train_eval(dataset, c) {
            Ok(o) => {
                cell.lambda = Some(o.weights.lambda);
                cell.accuracy = o.report.accuracy;
            }
            Err(e) => cell.failure = Some(e.to_string()),
        }
        out.push(cell);
    }
    out.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then(a.index.cmp(&b.index)));
    Ok(SweepReport {
        ranked: out,
        train_per_class: cfg.sweep.train_per_class.or(cfg.train_per_class),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Root-mean-square error over the standard deviation of `truth`. A
/// constant target yields 0 when the error vanishes and infinity otherwise.
pub fn nrmse(predicted: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let mse = predicted.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let mean = truth.iter().sum::<f64>() / n;
    let var = truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let rmse = mse.sqrt();
    if var.sqrt() <= 1e-12 * mean.abs().max(1.0) {
        if rmse <= 1e-9 * mean.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        rmse / var.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MackeyReport {
    pub window: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_nodes: usize,
    pub lambda: f64,
    pub reservoir_nrmse: f64,
    pub persistence_nrmse: f64,
    /// Two-layer stack with the same settings, when requested.
    pub two_layer_nrmse: Option<f64>,
    pub timings: Vec<(String, f64)>,
}

impl MackeyReport {
    pub fn ratio(&self) -> f64 {
        if self.persistence_nrmse == 0.0 {
            if self.reservoir_nrmse == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.reservoir_nrmse / self.persistence_nrmse
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16}{:>12}", "predictor", "nrmse");
        let _ = writeln!(s, "{:<16}{:>12.6}", "reservoir", self.reservoir_nrmse);
        if let Some(v) = self.two_layer_nrmse {
            let _ = writeln!(s, "{:<16}{:>12.6}", "reservoir_2l", v);
        }
        let _ = writeln!(s, "{:<16}{:>12.6}", "persistence", self.persistence_nrmse);
        let _ = writeln!(s, "{:<16}{:>12.4}", "ratio", self.ratio());
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = mackey");
        let _ = writeln!(s, "window = {}", self.window);
        let _ = writeln!(s, "n_train = {}", self.n_train);
        let _ = writeln!(s, "n_test = {}", self.n_test);
        let _ = writeln!(s, "n_nodes = {}", self.n_nodes);
        let _ = writeln!(s, "lambda = {:e}", self.lambda);
        let _ = writeln!(s, "reservoir_nrmse = {:.9}", self.reservoir_nrmse);
        if let Some(v) = self.two_layer_nrmse {
            let _ = writeln!(s, "two_layer_nrmse = {v:.9}");
        }
        let _ = writeln!(s, "persistence_nrmse = {:.9}", self.persistence_nrmse);
        let _ = writeln!(s, "ratio = {:.9}", self.ratio());
        for (k, v) in &self.timings {
            let _ = writeln!(s, "timing.{k} = {v:.6}");
        }
        s
    }
}

/// One-step-ahead prediction of `series[t + window]` from the window
/// `series[t..t + window]`. The first `n_train` windows train a ridge
/// readout (with a constant column) and the next `n_test` are scored.
pub fn predict_series(
    series: &[f64],
    reservoir: &ReservoirConfig,
    window: usize,
    n_train: usize,
    n_test: usize,
    lambda: f64,
) -> Result<(f64, f64)> {
    if window == 0 || n_train == 0 || n_test == 0 {
        return Err(invalid("window/train/test", "must be at least 1"));
    }
    let needed = window + n_train + n_test;
    if series.len() < needed {
        return Err(invalid(
            "series",
            format!("{} samples, need window + train + test = {needed}", series.len()),
        ));
    }
    let windows: Vec<&[f64]> = (0..n_train + n_test).map(|t| &series[t..t + window]).collect();
    let targets: Vec<f64> = (0..n_train + n_test).map(|t| series[t + window]).collect();
    let res = Reservoir::new(reservoir.clone())?;
    let states = res.states(&windows)?;
    let x = features(&states, true)?;
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n_train + n_test).collect();
    let y_train = DMatrix::from_column_slice(n_train, 1, &targets[..n_train]);
    let w = ridge_regression(x.select_rows(&train).matrix(), &y_train, lambda)?;
    let predicted = x.select_rows(&test).matrix() * w;
    let truth = &targets[n_train..];
    let persistence: Vec<f64> = windows[n_train..].iter().map(|w| w[window - 1]).collect();
    Ok((nrmse(predicted.as_slice(), truth), nrmse(&persistence, truth)))
}

pub fn mackey_bench(bench: &MackeyBench, reservoir: &ReservoirConfig) -> Result<MackeyReport> {
    let mut clock = Stopwatch::start();
    let mut spec = bench.series.clone();
    spec.length = bench.window + bench.n_train + bench.n_test;
    let series = gen_mackey_glass(&spec)?;
    clock.lap("series_s");
    let mut single = reservoir.clone();
    single.layers = 1;
    let (res, pers) = predict_series(&series, &single, bench.window, bench.n_train, bench.n_test, bench.lambda)?;
    clock.lap("one_layer_s");
    let two_layer_nrmse = if bench.compare_layers {
        let mut stacked = reservoir.clone();
        stacked.layers = 2;
        let (v, _) = predict_series(&series, &stacked, bench.window, bench.n_train, bench.n_test, bench.lambda)?;
        clock.lap("two_layer_s");
        Some(v)
    } else {
        None
    };
    Ok(MackeyReport {
        window: bench.window,
        n_train: bench.n_train,
        n_test: bench.n_test,
        n_nodes: reservoir.n_nodes,
        lambda: bench.lambda,
        reservoir_nrmse: res,
        persistence_nrmse: pers,
        two_layer_nrmse,
        timings: clock.laps,
    })
}

/// Reservoir size of the quick classifier.
pub const QUICK_NODES: usize = 150;

/// Quick held-out accuracy on labeled datapoints: global normalization
/// within the set, a single loop of [`QUICK_NODES`] nodes, λ fixed at
/// [`QUICK_LAMBDA`], seeded stratified split.
pub fn quick_accuracy(
    datapoints: &[Datapoint],
    base: &ReservoirConfig,
    train_fraction: f64,
    split_seed: u64,
) -> Result<f64> {
    let labels: Vec<usize> = datapoints
        .iter()
        .map(|d| d.label.ok_or(Error::Empty("labels")))
        .collect::<Result<_>>()?;
    let q = labels.iter().max().map_or(0, |m| m + 1);
    let (train, test) = stratified_split(&labels, q, train_fraction, split_seed)?;
    if test.is_empty() {
        return Err(invalid("train_fraction", "leaves no test datapoints"));
    }
    let mut points = datapoints.to_vec();
    normalize_global(&mut points);
    let cfg = ReservoirConfig {
        n_nodes: QUICK_NODES,
        split: false,
        layers: 1,
        ..base.clone()
    };
    let res = Reservoir::new(cfg)?;
    let states = res.states(&points)?;
    let x = StateMatrix::from_states(&states)?;
    let y = LabelMatrix::from_labels(&labels, q)?;
    let w = ridge_train(&x.select_rows(&train), &y.select_rows(&train), QUICK_LAMBDA)?;
    let predicted = w.predict(&x.select_rows(&test))?;
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    Ok(accuracy(&predicted, &truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(q: usize, per_class: usize, len: usize, seed: u64) -> Dataset {
        let mut rng = crate::rng::stream(seed, "toy");
        let mut points = Vec::new();
        for i in 0..q * per_class {
            let c = i % q;
            let values: Vec<f64> = (0..len)
                .map(|j| {
                    let base = if j % q == c { 0.8 } else { 0.2 };
                    base + 0.05 * rng.random::<f64>()
                })
                .collect();
            points.push(Datapoint::new(values, Some(c)));
        }
        Dataset::new(points, q).unwrap()
    }

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.reservoir.n_nodes = 40;
        cfg.reservoir.layer2_n_nodes = 20;
        cfg
    }

    #[test]
    fn separable_toy_is_learned() {
        let ds = toy(2, 40, 8, 1);
        let out = train_eval(&ds, &small_cfg()).unwrap();
        assert_eq!(out.report.accuracy, 1.0);
        assert_eq!(out.weights.config_hash, small_cfg().fingerprint());
    }

    #[test]
    fn report_is_consistent() {
        let ds = toy(4, 30, 8, 2);
        let mut cfg = small_cfg();
        cfg.baseline = true;
        let r = train_eval(&ds, &cfg).unwrap().report;
        let c = &r.confusion;
        assert_eq!(r.accuracy, c.correct() as f64 / c.total() as f64);
        for row in &c.counts {
            assert_eq!(row.iter().sum::<u64>(), 6);
        }
        assert!(r.field("raw_accuracy").is_some());
    }

    #[test]
    fn train_per_class_caps_training_set() {
        let ds = toy(2, 50, 8, 3);
        let mut cfg = small_cfg();
        cfg.train_per_class = Some(10);
        let r = train_eval(&ds, &cfg).unwrap().report;
        assert_eq!(r.field("n_train"), Some("20"));
        assert_eq!(r.field("n_test"), Some("20"));
    }

    #[test]
    fn inference_round_trip_and_mismatches() {
        let ds = toy(3, 20, 8, 4);
        let cfg = small_cfg();
        let out = train_eval(&ds, &cfg).unwrap();
        let r = evaluate(&ds, &out.weights, &cfg).unwrap();
        assert_eq!(r.predictions.len(), ds.len());
        let mut again = evaluate(&ds, &out.weights, &cfg).unwrap();
        again.timings = r.timings.clone();
        assert_eq!(r, again);

        let mut other = cfg.clone();
        other.reservoir.input_gain = 0.25;
        assert!(matches!(evaluate(&ds, &out.weights, &other), Err(Error::ArtifactMismatch(_))));
        let mut wrong_n = out.weights.clone();
        wrong_n.values = DMatrix::zeros(7, 3);
        assert!(matches!(evaluate(&ds, &wrong_n, &cfg), Err(Error::ArtifactMismatch(_))));
    }

    #[test]
    fn sweep_ranks_good_cell_above_degenerate_one() {
        // Class information sits only in the first half of each datapoint.
        let mut ds = toy(2, 30, 8, 5);
        for d in &mut ds.datapoints {
            d.values.extend(std::iter::repeat_n(0.5, 3));
        }
        ds.length = 11;
        let mut cfg = small_cfg();
        cfg.lambda = Some(1e-4);
        cfg.sweep = crate::config::SweepGrid {
            feedback_gain: vec![0.0, 0.9],
            n_nodes: vec![4, 40],
            filter_taps: vec![1],
            ..Default::default()
        };
        let rep = sweep(&ds, &cfg).unwrap();
        assert_eq!(rep.ranked.len(), 4);
        let best = &rep.ranked[0];
        let degenerate = rep
            .ranked
            .iter()
            .find(|c| c.feedback_gain == 0.0 && c.n_nodes == 4)
            .unwrap();
        assert!(best.accuracy > degenerate.accuracy + 0.2, "{}", rep.to_table());
        for w in rep.ranked.windows(2) {
            assert!(w[0].accuracy > w[1].accuracy || (w[0].accuracy == w[1].accuracy && w[0].index < w[1].index));
        }
    }

    #[test]
    fn one_cell_grid() {
        let ds = toy(2, 20, 8, 6);
        let mut cfg = small_cfg();
        cfg.sweep = Default::default();
        let rep = sweep(&ds, &cfg).unwrap();
        assert_eq!(rep.ranked.len(), 1);
        assert_eq!(rep.ranked[0].index, 0);
    }

    #[test]
    fn constant_series_has_zero_error() {
        let series = vec![0.7; 200];
        let mut r = crate::config::mackey_reservoir();
        r.n_nodes = 20;
        let (res, pers) = predict_series(&series, &r, 8, 100, 50, 1e-8).unwrap();
        assert_eq!(pers, 0.0);
        assert_eq!(res, 0.0);
    }

    #[test]
    fn decay_series_reservoir_not_worse_than_persistence() {
        let series: Vec<f64> = (0..400).map(|t| (-(t as f64) / 1000.0).exp()).collect();
        let mut r = crate::config::mackey_reservoir();
        r.n_nodes = 50;
        let (res, pers) = predict_series(&series, &r, 8, 250, 100, 1e-10).unwrap();
        assert!(res <= pers, "{res} vs {pers}");
    }

    #[test]
    fn short_series_is_rejected() {
        let r = crate::config::mackey_reservoir();
        assert!(predict_series(&[1.0; 10], &r, 8, 5, 5, 1e-6).is_err());
    }

    #[test]
    fn quick_accuracy_separates_toy() {
        let ds = toy(2, 30, 8, 7);
        let acc = quick_accuracy(&ds.datapoints, &ReservoirConfig::default(), 0.8, 1).unwrap();
        assert_eq!(acc, 1.0);
    }
}
