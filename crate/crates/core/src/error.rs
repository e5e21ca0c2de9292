use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the estimation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("simulation error at step {step}: {message}")]
    Simulation { step: usize, message: String },
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("verification failure: {0}")]
    Verification(String),
    #[error("degenerate bandwidth plan: {0}")]
    DegeneratePlan(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
