//! Sparse storage, ordering and a direct symmetric-indefinite solver.

mod csr;
pub mod ldl;
pub mod ordering;

pub use csr::CsrMatrix;
pub use ldl::{solve_refined, FactorStats, LdlFactor, LdlOptions, RefinementReport};
pub use ordering::{saddle_point_order, BlockSign, BlockStructure};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("system too large for 32-bit factor indices: {0}")]
    TooLarge(usize),
    #[error("matrix is numerically singular ({regularized} pivots regularized, capacitance sigma_min = {capacitance_min:.3e})")]
    Singular { regularized: usize, capacitance_min: f64 },
    #[error("iterative refinement stalled at relative residual {residual:.3e} (target {tol:.1e})")]
    NoConvergence { residual: f64, tol: f64 },
}
