use thiserror::Error;

use crate::evolution::Trajectory;
use crate::prox::ProxReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("field lives on a different grid than the operator it was passed to")]
    GridMismatch,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(
        "implicit step did not converge after {} iterations (gradient norm {:.3e})",
        .0.iterations,
        .0.final_gradient_norm
    )]
    ProxNotConverged(Box<ProxReport>),

    /// An inner solve failed during time stepping; the states computed so far are kept.
    #[error("evolution aborted at step {step}: {source}")]
    StepFailed {
        step: usize,
        partial: Box<Trajectory>,
        #[source]
        source: Box<Error>,
    },

    #[error("{what} did not converge within {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// `origin` is `line N` for the config file or the flag that set the value.
    #[error("config {origin}: {msg}")]
    Config { origin: String, msg: String },

    #[error("malformed {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    /// True for errors raised by an iterative solver rather than by bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::ProxNotConverged(_)
                | Error::StepFailed { .. }
                | Error::NotConverged { .. }
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
