//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Error, Debug)]
pub enum FpsError {
    /// Invalid configuration or dimension mismatch caught before compute.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Sketches with incompatible shapes or hash seeds cannot be merged.
    #[error("merge error: {0}")]
    Merge(String),

    /// Transmission violates channel constraints.
    #[error("channel error: {0}")]
    Channel(String),

    /// An operation was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// Not enough data to compute the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The requested quantity is undefined for this input.
    #[error("undefined for this input: {0}")]
    UndefinedInput(String),

    /// The learning-rate bound has an empty admissible range.
    #[error("no admissible learning rate: {0}")]
    NoAdmissibleRate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FpsError>;
