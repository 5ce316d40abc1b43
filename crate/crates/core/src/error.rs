use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or inconsistent arguments.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a dataset invariant or failed to parse.
    #[error("data error: {0}")]
    Data(String),

    /// A log-likelihood evaluated to a non-finite value.
    #[error("non-finite log-likelihood for record {record} (x = {value}) at theta {theta}")]
    Evaluation {
        record: usize,
        value: u64,
        theta: String,
    },

    /// Draws, weights and dataset do not belong together.
    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Serialization(_) | Error::Io { .. } => 2,
            Error::Data(_) | Error::Evaluation { .. } | Error::Provenance(_) => 3,
            Error::Convergence(_) => 4,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Evaluation { .. } => "evaluation",
            Error::Provenance(_) => "provenance",
            Error::Convergence(_) => "convergence",
            Error::Io { .. } => "io",
            Error::Serialization(_) => "serialization",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}
