use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the field engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("coordinate {value} on axis {axis} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain { axis: usize, value: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("vanishing gradient (|grad f| = {0:e})")]
    VanishingGradient(f64),

    #[error("parse error in {path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
