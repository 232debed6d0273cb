use std::path::PathBuf;

use thiserror::Error;

use crate::tree::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration file or option is inconsistent with the data or with itself.
    #[error("configuration error: {0}")]
    Config(String),

    /// A data cell could not be interpreted.
    #[error("data error at row {row}, column `{column}`: {message}")]
    Data { row: usize, column: String, message: String },

    /// The data as a whole violates an invariant (for example a single protected group).
    #[error("data error: {0}")]
    Dataset(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("tree violates structural constraints: {}", format_violations(.0))]
    InvalidTree(Vec<Violation>),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { context: context.into(), message: message.into() }
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
