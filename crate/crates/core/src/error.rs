use thiserror::Error;

use crate::nonlinear::NewtonFailure;
use crate::sparse::SolverError;

/// Errors reported by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("nonlinear iteration failed: {model} model: {failure}")]
    NonConvergence { model: &'static str, failure: NewtonFailure },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
