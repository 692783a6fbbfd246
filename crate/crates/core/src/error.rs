use thiserror::Error;

/// Errors raised by the numerical, graph, model and estimation layers.
///
/// State indices carried by variants are zero-based; user-facing layers
/// translate them to one-based labels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is singular to working precision at pivot {pivot} (|pivot| = {magnitude:e})")]
    Singular { pivot: usize, magnitude: f64 },

    #[error("power iteration did not converge within {iterations} iterations")]
    IterationLimit { iterations: usize },

    #[error("state {target} is not universally accessible; unreachable from {unreachable:?}")]
    NotUniversallyAccessible {
        target: usize,
        unreachable: Vec<usize>,
    },

    #[error("incomplete data: states {states:?} are reachable but were never observed leaving")]
    IncompleteData { states: Vec<usize> },

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("format error{}: {message}", .row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Format { row: Option<usize>, message: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
