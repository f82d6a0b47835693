//! Linear readout trained in closed form by ridge regression.
//!
//! `W = (X'X + λI)^-1 X'Y`, solved through a Cholesky factorization of the
//! regularized normal matrix. Inference is the single product `y = xW`
//! followed by an argmax.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix};
use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::reservoir::ReservoirState;
use crate::rng;

/// Stacked reservoir states, one row per datapoint, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    values: DMatrix<f64>,
}

impl StateMatrix {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("state matrix"))?;
        let n = first.as_ref().len();
        if n == 0 {
            return Err(Error::Empty("state vector"));
        }
        let mut flat = Vec::with_capacity(rows.len() * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {n}",
                    r.len()
                )));
            }
            flat.extend_from_slice(r);
        }
        Ok(Self {
            values: DMatrix::from_row_slice(rows.len(), n, &flat),
        })
    }

    pub fn from_states(states: &[ReservoirState]) -> Result<Self> {
        let rows: Vec<&[f64]> = states.iter().map(|s| s.values.as_slice()).collect();
        Self::from_rows(&rows)
    }

    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Empty("state matrix"));
        }
        Ok(Self { values })
    }

    /// Appends a constant 1 feature to every row.
    pub fn with_constant_column(&self) -> Self {
        let n = self.values.ncols();
        Self {
            values: self.values.clone().insert_column(n, 1.0),
        }
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// One-hot target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: DMatrix<f64>,
    labels: Vec<usize>,
}

impl LabelMatrix {
    pub fn from_labels(labels: &[usize], num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("labels"));
        }
        let mut values = DMatrix::zeros(labels.len(), num_classes);
        for (row, &label) in labels.iter().enumerate() {
            if label >= num_classes {
                return Err(invalid(
                    "label",
                    format!("{label} out of range for {num_classes} classes"),
                ));
            }
            values[(row, label)] = 1.0;
        }
        Ok(Self {
            values,
            labels: labels.to_vec(),
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.values.ncols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Zero-indexed one-hot encoding.
pub fn one_hot(label: usize, num_classes: usize) -> Result<Vec<f64>> {
    if label >= num_classes {
        return Err(invalid(
            "label",
            format!("{label} out of range for {num_classes} classes"),
        ));
    }
    let mut row = vec![0.0; num_classes];
    row[label] = 1.0;
    Ok(row)
}

/// Trained readout: an `N x Q` matrix and the regularizer it was fit with.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    pub values: DMatrix<f64>,
    pub lambda: f64,
    /// Fingerprint of the reservoir configuration that produced the training
    /// states; 0 when unknown.
    pub config_hash: u64,
}

impl ReadoutWeights {
    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.values.ncols()
    }

    /// Scores for every row of `states`.
    pub fn scores(&self, states: &StateMatrix) -> Result<DMatrix<f64>> {
        if states.cols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "states have {} columns, weights expect {}",
                states.cols(),
                self.n_features()
            )));
        }
        Ok(states.matrix() * &self.values)
    }

    /// Argmax class for every row of `states`.
    pub fn predict(&self, states: &StateMatrix) -> Result<Vec<usize>> {
        let scores = self.scores(states)?;
        Ok(scores
            .row_iter()
            .map(|r| argmax(r.iter().copied()))
            .collect())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Solves `(X'X + λI) W = X'Y` for arbitrary real targets `Y`.
pub fn ridge_regression(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", "must be finite and non-negative"));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} state rows vs {} target rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Empty("state matrix"));
    }
    let n = x.ncols();
    let mut normal = x.tr_mul(x);
    for i in 0..n {
        normal[(i, i)] += lambda;
    }
    let max_diag = (0..n).map(|i| normal[(i, i)]).fold(0.0, f64::max);
    let chol = Cholesky::new(normal).ok_or(Error::Singular { lambda })?;
    // A factorization can "succeed" on a numerically rank-deficient matrix
    // with vanishing pivots; treat those as singular too.
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, &v| m.min(v * v));
    if !(min_pivot > 1e-13 * max_diag) {
        return Err(Error::Singular { lambda });
    }
    let w = chol.solve(&x.tr_mul(y));
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { lambda });
    }
    Ok(w)
}

pub fn ridge_train(
    states: &StateMatrix,
    labels: &LabelMatrix,
    lambda: f64,
) -> Result<ReadoutWeights> {
    Ok(ReadoutWeights {
        values: ridge_regression(states.matrix(), labels.matrix(), lambda)?,
        lambda,
        config_hash: 0,
    })
}

/// Class and score vector for one state.
pub fn infer(state: &ReservoirState, weights: &ReadoutWeights) -> Result<(usize, Vec<f64>)> {
    infer_slice(&state.values, weights)
}

pub fn infer_slice(state: &[f64], weights: &ReadoutWeights) -> Result<(usize, Vec<f64>)> {
    if state.len() != weights.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} entries, weights expect {}",
            state.len(),
            weights.n_features()
        )));
    }
    let scores: Vec<f64> = (0..weights.n_outputs())
        .map(|q| weights.values.column(q).iter().zip(state).map(|(w, x)| w * x).sum())
        .collect();
    Ok((argmax(scores.iter().copied()), scores))
}

/// Seeded stratified split. Within each class the members are shuffled on
/// their own stream and the first `round(fraction * count)` go to training.
/// Both returned index lists are sorted.
pub fn stratified_split(
    labels: &[usize],
    num_classes: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(invalid("train_fraction", "must lie in [0, 1]"));
    }
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(invalid("label", format!("{l} out of range for {num_classes} classes")));
        }
        by_class[l].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng::indexed_stream(seed, "split", class as u64));
        let n_train = (train_fraction * members.len() as f64).round() as usize;
        if n_train == 0 {
            return Err(Error::DegenerateSplit(class));
        }
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

/// Picks the λ with the best held-out accuracy on a seeded stratified 80/20
/// split. Ties go to the smaller λ; values whose normal matrix is singular
/// are skipped.
pub fn select_lambda(
    states: &StateMatrix,
    labels: &LabelMatrix,
    grid: &[f64],
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0)) {
        return Err(invalid("lambda", format!("grid value {bad} is negative")));
    }
    if states.rows() < 2 {
        return Err(invalid("states", "need at least 2 rows to hold out a part"));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let (train, test) = stratified_split(labels.labels(), labels.num_classes(), 0.8, seed)?;
    let present: Vec<bool> = {
        let mut p = vec![false; labels.num_classes()];
        train.iter().for_each(|&i| p[labels.labels()[i]] = true);
        p
    };
    if let Some(class) = labels
        .labels()
        .iter()
        .find(|&&l| !present[l])
    {
        return Err(Error::DegenerateSplit(*class));
    }
    if test.is_empty() {
        return Err(invalid("states", "held-out part of the split is empty"));
    }
    let x_train = states.select_rows(&train);
    let y_train = labels.select_rows(&train);
    let x_test = states.select_rows(&test);
    let truth: Vec<usize> = test.iter().map(|&i| labels.labels()[i]).collect();

    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &sorted {
        let w = match ridge_train(&x_train, &y_train, lambda) {
            Ok(w) => w,
            Err(Error::Singular { .. }) => continue,
            Err(e) => return Err(e),
        };
        let acc = accuracy(&w.predict(&x_test)?, &truth);
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((lambda, acc));
        }
    }
    best.map(|(l, _)| l).ok_or(Error::Singular { lambda: sorted[0] })
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"DLRW";
pub const WEIGHTS_VERSION: u32 = 1;

/// Writes the `DLRW` artifact: magic, version (u32), N (u32), Q (u32),
/// λ (f64), config hash (u64), then `N * Q` row-major f64. Little-endian.
pub fn write_weights(mut out: impl Write, weights: &ReadoutWeights) -> Result<()> {
    let (n, q) = weights.values.shape();
    out.write_all(WEIGHTS_MAGIC)?;
    out.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    out.write_all(&(n as u32).to_le_bytes())?;
    out.write_all(&(q as u32).to_le_bytes())?;
    out.write_all(&weights.lambda.to_le_bytes())?;
    out.write_all(&weights.config_hash.to_le_bytes())?;
    for r in 0..n {
        for c in 0..q {
            out.write_all(&weights.values[(r, c)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "DLRW",
        reason: reason.into(),
    }
}

pub fn read_weights(mut input: impl Read) -> Result<ReadoutWeights> {
    let mut header = [0u8; 32];
    input
        .read_exact(&mut header)
        .map_err(|_| format_err("truncated header"))?;
    if &header[0..4] != WEIGHTS_MAGIC {
        return Err(format_err("bad magic"));
    }
    let word = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != WEIGHTS_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let n = word(8) as usize;
    let q = word(12) as usize;
    let lambda = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let config_hash = u64::from_le_bytes(header[24..32].try_into().unwrap());
    let mut body = vec![0u8; n * q * 8];
    input
        .read_exact(&mut body)
        .map_err(|_| format_err("truncated body"))?;
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ReadoutWeights {
        values: DMatrix::from_row_slice(n, q, &flat),
        lambda,
        config_hash,
    })
}
