use thiserror::Error;

/// Errors raised by the channel model, estimators, simulators and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. `t <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid (even filter window, `k*dt >= 1`, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An observation series violates its invariants.
    #[error("invalid observation series: {0}")]
    InvalidSeries(String),

    /// The Fisher information is zero, so the bound does not exist.
    #[error("CRLB is unbounded: Fisher information is zero")]
    UnboundedCrlb,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
