//! Error taxonomy shared across the crate.
//!
//! Errors fall into three categories that the CLI maps onto process exit
//! codes: configuration problems (2), dataset/IO problems (3), and numeric
//! failures such as a non-finite training loss (4).

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad hyperparameter, incompatible shapes
    /// requested, unknown skeleton id, malformed config file.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid or missing dataset content: absent files, payload size
    /// mismatch, metadata that violates its invariants.
    #[error("data error: {0}")]
    Data(String),

    /// Numeric failure at runtime, e.g. a non-finite loss or a degenerate
    /// geometry that has no solution.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the CLI: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}
