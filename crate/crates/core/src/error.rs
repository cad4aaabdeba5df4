use thiserror::Error;

/// Failures raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("image sum needs {needed} terms, limit is {limit}")]
    Truncation { needed: usize, limit: usize },

    #[error("ensemble degenerate: effective sample size {ess:.3} below {threshold}")]
    Degenerate { ess: f64, threshold: f64 },

    #[error("non-finite {term} term in path weight")]
    NonFinite { term: &'static str },

    #[error("scheme failure: {0}")]
    Scheme(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
