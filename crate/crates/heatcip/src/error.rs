use std::fmt;

/// Everything that can go wrong inside the library.
///
/// `Validation` and `Parse` are user-input problems; the rest are runtime
/// failures. The CLI maps the first group to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-positive boundary value {value:e} at node {node}, time {time}; the log transform needs g0 > 0")]
    NonPositive { node: usize, time: f64, value: f64 },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("line search failed at iteration {iteration}: {message}")]
    LineSearch { iteration: usize, message: String },

    #[error("non-finite functional value at iteration {0}")]
    NonFinite(usize),

    #[error("{0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(field: impl Into<String>, message: impl fmt::Display) -> Self {
        Error::Validation { field: field.into(), message: message.to_string() }
    }

    pub fn parse(offset: usize, message: impl fmt::Display) -> Self {
        Error::Parse { offset, message: message.to_string() }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// True for errors caused by bad input rather than by the computation.
    pub fn is_user_error(&self) -> bool {
        matches!(self, Error::Validation { .. } | Error::Parse { .. } | Error::GridMismatch(_))
    }
}
