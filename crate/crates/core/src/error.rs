use thiserror::Error;

/// Errors raised by the numerical routines and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the domain of the operation (negative variance, `t = 0`
    /// on a singular kernel, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A discretization produced a result violating a checked invariant.
    #[error("numerical failure: {what} (residual {residual:e})")]
    NumericalFailure { what: String, residual: f64 },

    /// A Riccati solve produced a non-finite value. `last_valid_time` is the
    /// last grid time with a finite solution.
    #[error("solution blew up after t = {last_valid_time}")]
    Blowup { last_valid_time: f64 },

    /// An object lacks the data an operation needs (e.g. paths simulated
    /// without stored Brownian increments).
    #[error("state error: {0}")]
    State(String),

    /// Configuration rejected by schema validation.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(what: impl Into<String>, residual: f64) -> Self {
        Error::NumericalFailure {
            what: what.into(),
            residual,
        }
    }
}
