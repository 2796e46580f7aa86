//! Complex linear algebra substrate and validated quantum-state types.

pub mod eig;
pub mod io;
pub mod matrix;
pub mod random;
pub mod state;

pub use eig::{eig_hermitian, eig_symmetric};
pub use io::{read_density_matrix, write_density_matrix};
pub use matrix::ComplexMatrix;
pub use num_complex::Complex64 as C64;
pub use state::{partial_trace, project_to_physical, tensor, tensor_kets, DensityMatrix, Keep, Ket, MAX_DIM};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QlinError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("trace is {trace:.12}, expected 1")]
    BadTrace { trace: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("composite dimension {dim} exceeds the supported maximum of {MAX_DIM}")]
    DimensionOverflow { dim: usize },
    #[error("zero or vanishing state has no physical normalization")]
    ZeroState,
    #[error("interchange format error: {0}")]
    Format(String),
}
