//! Dense linear algebra and seeded randomness shared by every other module.
//!
//! Everything here is a pure function of its inputs; matrices are plain owned
//! values and can be shared across threads freely.

mod factor;
mod matrix;
mod rng;
mod spectral;

pub use factor::{min_norm_fit, psd_factor, solve_psd, Cholesky, MinNormSolution};
pub use matrix::{axpy, dot, norm2, sub_vec, DenseMatrix};
pub use rng::{fnv1a64, gauss_matrix, unit_gaussian_vector, Cursor, RngStream};
pub use spectral::{
    min_eigenvalue, spectral_norm, spectral_norm_sym, symmetric_eigen, top_singular_left, SingularPair,
};

#[derive(Debug, Clone, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("empty input")]
    Empty,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("gram matrix is singular (pivot {pivot:e} at index {index} below floor {floor:e})")]
    SingularGram { index: usize, pivot: f64, floor: f64 },
    #[error("matrix is identically zero")]
    ZeroMatrix,
    #[error("power iteration did not converge in {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        best: Box<SingularPair>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}
