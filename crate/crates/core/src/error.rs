use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("impulse response diverged at k = {k} (|g(k)| = {value:e})")]
    Diverged { k: usize, value: f64 },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("non-finite objective: {0}")]
    NonFinite(String),

    #[error("all {starts} optimizer starts diverged")]
    AllStartsDiverged { starts: usize },

    #[error("reference impulse response has zero norm")]
    ZeroNorm,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
