use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid hyperparameters: {0}")]
    Hyperparameters(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid query: {0}")]
    Query(String),

    #[error("inconsistent state: {0}")]
    Inconsistent(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed input table. `row` is 1-based and counts the header line.
    #[error("{path}: row {row}, column {column:?}: {message}")]
    Input {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: sample store: {message}")]
    SampleStore { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
