use num_complex::Complex64;
use thiserror::Error;

use crate::debranges::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian within tolerance (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is indefinite: smallest eigenvalue {min_eigenvalue:.3e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("point {z} outside the domain: {reason}")]
    Domain { z: Complex64, reason: String },

    #[error("numerically singular matrix at {z}: sigma_min = {sigma_min:.3e}, sigma_max = {sigma_max:.3e}")]
    Singularity {
        z: Complex64,
        sigma_min: f64,
        sigma_max: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite state in canonical system at r = {r} (step {step})")]
    NonFinite { r: f64, step: usize },

    #[error("de Branges validation failed at check `{check}`")]
    ValidationFailure {
        check: String,
        report: Box<ValidationReport>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
