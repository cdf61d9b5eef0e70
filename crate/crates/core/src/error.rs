use thiserror::Error;

use crate::timestepper::RunState;

/// Errors raised by the model library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("radiative equilibrium did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("resolution overflow: tensor estimate {estimate} bytes exceeds cap {cap} bytes")]
    ResolutionOverflow { estimate: usize, cap: usize },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("non-finite value in the {equation} equation")]
    NonFinite { equation: &'static str },

    #[error("overflow at step {step}: coefficient magnitude {magnitude:e} exceeds cap")]
    Overflow {
        step: u64,
        magnitude: f64,
        last_valid: Box<RunState>,
    },

    #[error("sink failed at step {step}: {message}")]
    Sink {
        step: u64,
        message: String,
        last_valid: Box<RunState>,
    },

    #[error("format version mismatch: file has {found}, reader expects {expected}")]
    FormatVersion { found: String, expected: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the user's configuration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParam { .. } | Error::Config { .. } | Error::ResolutionOverflow { .. }
        )
    }

    /// True for numerical aborts (overflow, non-finite values, solver failure).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow { .. } | Error::NonFinite { .. } | Error::NonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
