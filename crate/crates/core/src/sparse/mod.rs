//! Sparse matrices, the direct LU solver and Krylov methods.

mod csr;
mod krylov;
mod lu;
mod market;

pub use csr::{axpy, dot, norm2, CsrMatrix, PatternBuilder};
pub use krylov::{cg, fgmres, KrylovConfig, KrylovReport};
pub use lu::{LuFactorization, LuSymbolic};
pub use market::write_matrix_market;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("iterative solver did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64, best: Vec<f64> },

    #[error("iterative solver breakdown: {0}")]
    Breakdown(String),

    #[error("preconditioner failed: {0}")]
    Preconditioner(String),
}
