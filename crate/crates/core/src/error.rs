use thiserror::Error;

/// Failures surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain the operation is defined on.
    #[error("parameter out of domain: {0}")]
    Domain(String),
    /// Quadrature or series truncation could not meet the requested tolerance.
    #[error("numeric accuracy not reached ({context}): achieved error bound {achieved:e}, requested {requested:e}")]
    Accuracy {
        context: String,
        achieved: f64,
        requested: f64,
    },
    /// A linear-algebra or positivity check failed; usually a covariance bug.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A simulated path produced a statistic the estimator cannot invert.
    #[error("degenerate path: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
