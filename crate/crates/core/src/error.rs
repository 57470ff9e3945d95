use num_complex::Complex64;
use thiserror::Error;

use crate::diagnostics::StateProfile;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("{kind} eigensolver failed on a {n}x{n} matrix (max |entry| = {scale:e}): {reason}")]
    Eigensolver {
        kind: &'static str,
        n: usize,
        scale: f64,
        reason: String,
    },

    #[error(
        "defective or near-defective spectrum: eigenvalues {i} ({ei}) and {j} ({ej}), \
         biorthogonality residual {residual:e}"
    )]
    Degenerate {
        i: usize,
        j: usize,
        ei: Complex64,
        ej: Complex64,
        residual: f64,
    },

    #[error("time propagation did not converge: survival probability {survival:e} at t = {t:e}")]
    NonConvergentTail { survival: f64, t: f64 },

    #[error("Lindblad steady state is not unique (null space dimension {dim})")]
    NonUniqueSteadyState { dim: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),

    #[error("{quantity} is not applicable: {reason}")]
    NotApplicable {
        quantity: &'static str,
        reason: String,
    },

    #[error("every realization has a divergent transfer time")]
    AllDivergent(Box<StateProfile>),

    #[error("peak fit failed: {0}")]
    FitFailed(String),

    #[error("line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn not_applicable(quantity: &'static str, reason: impl Into<String>) -> Self {
        Error::NotApplicable {
            quantity,
            reason: reason.into(),
        }
    }
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
