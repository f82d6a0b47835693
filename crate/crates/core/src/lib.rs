//! Delay-loop reservoir computing.
//!
//! A single nonlinear node with delayed feedback, time-multiplexed into `N`
//! virtual nodes by a random input mask, followed by a linear readout
//! trained in closed form. The crate also carries the pieces needed to apply
//! it to RF emitter identification (burst detection, extraction, magnitude
//! datapoints, channel corruption, synthetic emitters) and to one-step
//! Mackey-Glass prediction, plus loop-gain and figure-of-merit calculators.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiment;
pub mod readout;
pub mod reservoir;
pub mod rng;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use readout::{infer, one_hot, ridge_train, select_lambda, LabelMatrix, ReadoutWeights, StateMatrix};
pub use reservoir::{
    make_filter, make_mask, run_loop, run_split_loop, run_stacked_loops, FilterKernel, Nonlinearity, Reservoir,
    ReservoirConfig, ReservoirState, SpreadMask,
};
pub use signal::format::Dataset;
pub use signal::{CorruptionSpec, Datapoint, Iq, IqCapture, Normalization};
