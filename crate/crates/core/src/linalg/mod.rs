//! Sparse symmetric storage and the direct solver used by the eigensolver.

mod cholesky;
mod sparse;

pub use cholesky::{reverse_cuthill_mckee, EnvelopeCholesky};
pub use sparse::SparseSymMatrix;
