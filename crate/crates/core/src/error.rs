use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite gradient for primitive {id}")]
    PoisonedGradient { id: u64 },

    #[error("bias correction undefined for a moment state with zero updates")]
    UndefinedCorrection,

    #[error("alignment mismatch: expected {expected} entries, got {got}")]
    Alignment { expected: usize, got: usize },

    #[error("snapshot decode failed: {0}")]
    Snapshot(String),

    #[error("export to {path:?} failed: {source}")]
    Export {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path:?}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("non-finite loss at step {step}: {dump}")]
    NonFiniteLoss { step: u64, dump: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn export(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Export {
            path: path.into(),
            source,
        }
    }
}
