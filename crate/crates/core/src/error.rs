use std::io;

use thiserror::Error;

/// Errors produced by the reservoir, readout and signal pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    /// The regularized normal matrix could not be factorized.
    #[error("normal matrix is singular (lambda = {lambda})")]
    Singular { lambda: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("window [{start}, {end}) does not fit in {len} samples")]
    OutOfBounds { start: i64, end: i64, len: usize },

    /// A stratified split left a class without any training members.
    #[error("class {0} has no members in the training part of the split")]
    DegenerateSplit(usize),

    #[error("emitter separation rule cannot place {requested} devices (achievable maximum {achievable})")]
    TooManyDevices { requested: usize, achievable: usize },

    /// An artifact's stored fingerprint does not match what the caller expects.
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error("malformed {format} file: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
