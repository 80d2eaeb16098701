use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("essential point at index {index} cannot be projected")]
    EssentialPoint { index: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("optimizer did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        trace: Box<crate::estimation::OptimizerTrace>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Coarse classification used for CLI exit codes and FFI status codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_) | Error::EssentialPoint { .. } => ErrorKind::Invalid,
            Error::Parse { .. } | Error::Read { .. } | Error::Json(_) => ErrorKind::Parse,
            Error::Write { .. } => ErrorKind::Io,
            Error::Numeric(_) | Error::NonConvergence { .. } => ErrorKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Invalid,
    Parse,
    Io,
    Numeric,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
