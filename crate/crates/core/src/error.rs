use thiserror::Error;

/// Errors raised by estimation, simulation and data handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Both randomized arms must be represented for the instrument to carry information.
    #[error("identification failure: {0}")]
    Identification(String),

    #[error("numeric failure at jump {jump}: {message}")]
    NumericFailure { jump: usize, message: String },

    /// Schema violation in an input file; `row` is 1-based and counts the header as row 1.
    #[error("{file}: row {row}, column '{column}': {message}")]
    Schema {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
