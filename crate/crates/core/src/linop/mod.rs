//! Sparse storage and matrix-free operators: centered Gram products, conjugate
//! gradient, block-accelerated solves and a Lanczos top-r eigensolver.

mod cg;
mod csr;
mod gram;
mod lanczos;
mod woodbury;

pub use cg::{conjugate_gradient, CgSolution, SolverTolerances};
pub use csr::CsrMatrix;
pub use gram::CenteredGramOperator;
pub use lanczos::{eigensolve_topk, EigenDecomposition};
pub use woodbury::{block_solve, BlockSolver, SolveStatsSnapshot};

pub(crate) use csr::dot;
