use thiserror::Error;

use crate::model::Regime;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of the evaluated function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The parameters (or the fuel level) lie outside the range where the
    /// moving-boundary construction applies.
    #[error("regime error ({regime}): {message}")]
    Regime { regime: Regime, message: String },

    /// A computed object failed a structural audit.
    #[error("validation error at {location:.17e}: worst violation {violation:.3e} ({message})")]
    Validation {
        location: f64,
        violation: f64,
        message: String,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Evaluation requested exactly at a point where the quantity is undefined.
    #[error("breakpoint: quantity undefined at x = {0:.17e}")]
    Breakpoint(f64),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn regime(regime: Regime, msg: impl Into<String>) -> Self {
        Error::Regime {
            regime,
            message: msg.into(),
        }
    }

    /// True for errors that mean "outside the applicable parameter range"
    /// rather than a numerical or programming failure.
    pub fn is_regime(&self) -> bool {
        matches!(self, Error::Regime { .. })
    }
}
