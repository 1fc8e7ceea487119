use std::path::PathBuf;

use thiserror::Error;

use crate::protocol::Phase;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid graph set: {0}")]
    InvalidGraphSet(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigenvector basis is not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("phase violation: {kind} not accepted in phase {phase:?}")]
    Phase { phase: Phase, kind: String },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that stem from reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
