use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("validation error in graph {graph}: {detail}")]
    Validation { graph: usize, detail: String },
    #[error("{0}")]
    Refused(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error came from a non-finite numeric value.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Tensor(TensorError::NonFinite { .. }))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
