//! Std side of the robust one-class SVM: experiment configs, dataset and
//! model files, the batch runner behind the `drocc` binary, and the
//! verification suite used by `drocc check`.

pub mod check;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod io;

use std::path::PathBuf;

/// Errors surfaced by the runner. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bad config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] drocc_core::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad input, config or paths; 2 for failures while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Io { .. } => 1,
            Error::Core(drocc_core::Error::Input(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
