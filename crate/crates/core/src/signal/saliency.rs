use std::collections::BTreeSet;

use super::{magnitude, sub_burst, Datapoint, Iq};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_MIN_WINDOW: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBurst {
    pub samples: Vec<Iq>,
    pub label: usize,
}

/// Accuracy for every `(start, end)` sub-burst window on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    /// Grid positions used for both starts and ends.
    pub positions: Vec<usize>,
    /// `accuracy[i][j]` is the accuracy for window `[positions[i], positions[j])`,
    /// `None` where the window is empty or shorter than the minimum.
    pub accuracy: Vec<Vec<Option<f64>>>,
    pub best: (usize, usize, f64),
}

impl SaliencyMap {
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.accuracy.iter().enumerate().flat_map(move |(i, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(j, a)| a.map(|a| (self.positions[i], self.positions[j], a)))
        })
    }
}

/// Runs `train_fn` on the magnitude datapoints of every grid window and
/// records the accuracy it returns. Grid positions are the multiples of
/// `grid_step` below the burst length, plus the burst length itself. The
/// best cell is the highest accuracy, ties broken by the shortest window and
/// then the earliest start.
pub fn saliency_sweep<F>(
    bursts: &[LabeledBurst],
    grid_step: usize,
    min_window: usize,
    train_fn: F,
) -> Result<SaliencyMap>
where
    F: Fn(&[Datapoint]) -> Result<f64>,
{
    if grid_step == 0 {
        return Err(invalid("grid_step", "must be at least 1"));
    }
    let k = bursts.first().ok_or(Error::Empty("bursts"))?.samples.len();
    if bursts.iter().any(|b| b.samples.len() != k) {
        return Err(Error::DimensionMismatch("bursts differ in length".into()));
    }
    let classes: BTreeSet<usize> = bursts.iter().map(|b| b.label).collect();
    if classes.len() < 2 {
        return Err(invalid("bursts", "saliency needs at least two classes"));
    }

    let mut positions: Vec<usize> = (0..k).step_by(grid_step).collect();
    positions.push(k);
    let mut accuracy = vec![vec![None; positions.len()]; positions.len()];
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, &start) in positions.iter().enumerate() {
        for (j, &end) in positions.iter().enumerate().skip(i + 1) {
            if end - start < min_window.max(1) {
                continue;
            }
            let datapoints = bursts
                .iter()
                .map(|b| {
                    let mut d = magnitude(&sub_burst(&b.samples, start, end)?);
                    d.label = Some(b.label);
                    Ok(d)
                })
                .collect::<Result<Vec<_>>>()?;
            let acc = train_fn(&datapoints)?;
            accuracy[i][j] = Some(acc);
            let better = match best {
                None => true,
                Some((bs, be, ba)) => {
                    acc > ba || (acc == ba && ((end - start) < (be - bs) || ((end - start) == (be - bs) && start < bs)))
                }
            };
            if better {
                best = Some((start, end, acc));
            }
        }
    }
    let best = best.ok_or_else(|| invalid("min_window", "no grid window is long enough"))?;
    Ok(SaliencyMap {
        positions,
        accuracy,
        best,
    })
}
