use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("zero finding for J_{nu} failed at zero index {index}")]
    ZeroNotFound { nu: f64, index: usize },

    #[error("{what} did not converge: {detail}")]
    NoConvergence { what: &'static str, detail: String },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("invalid nonlinearity: {0}")]
    Nonlinearity(String),

    #[error("config line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("invalid value for `{field}`: {msg}")]
    ConfigField { field: String, msg: String },

    #[error("branch has no fold")]
    NoFold,

    #[error("inconsistent estimates: {0}")]
    Inconsistent(String),

    #[error("coefficient vector belongs to a different basis")]
    BasisMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
