use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EdmError>;

/// Errors raised across the modeling pipeline.
#[derive(Debug, Error)]
pub enum EdmError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("unknown series `{0}`")]
    UnknownSeries(String),

    #[error("no overlap between year ranges")]
    NoOverlap,

    #[error("series too short: need more than {needed} points, have {available}")]
    TooShort { needed: usize, available: usize },

    #[error("insufficient neighbors: requested {requested}, only {available} admissible")]
    InsufficientNeighbors { requested: usize, available: usize },

    #[error("not enough valid pairs to compute skill (have {0})")]
    NotEnoughPairs(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown coordinate `{0}`")]
    UnknownCoordinate(String),
}

impl EdmError {
    /// True when the failure comes from user input rather than from a computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            EdmError::Io { .. }
                | EdmError::Csv { .. }
                | EdmError::InvalidData(_)
                | EdmError::UnknownSeries(_)
                | EdmError::InvalidConfig(_)
                | EdmError::UnknownCoordinate(_)
        )
    }
}
