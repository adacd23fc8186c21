use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("{path}: row {row}, column {col}: negative entry {value}")]
    NegativeEntry {
        path: PathBuf,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("class {class} has {count} labeled instances, fewer than the {folds} folds requested")]
    ClassTooSmall {
        class: usize,
        count: usize,
        folds: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("fold {fold} of repeat {repeat} failed: {source}")]
    Fold {
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised by the optimizer rather than by malformed input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NumericalFailure(_) => true,
            Error::Fold { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
