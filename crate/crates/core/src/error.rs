use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty class: {0}")]
    EmptyClass(&'static str),

    #[error("batch of {requested} {class} examples requested but only {available} available")]
    Capacity {
        class: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value {value} outside score range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("quantile samples are not monotone at knot {0}")]
    Monotonicity(usize),

    #[error("training diverged at iteration {iter}: {what} is not finite")]
    Divergence { iter: usize, what: &'static str },

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }
}
