use thiserror::Error;

use crate::linalg::PsdReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel is not positive: min eigenvalue {:.3e}", .0.min_eigenvalue)]
    NotPositiveKernel(Box<PsdReport>),

    #[error("vector families are not isometric: Gram mismatch {mismatch:.3e}")]
    NotIsometric { mismatch: f64 },

    #[error("test function is not strictly contractive at {at} (norm {norm})")]
    TestAxiom { at: String, norm: f64 },

    #[error("no extreme measure accepted after {attempts} attempts")]
    SamplingFailure { attempts: usize },

    #[error("boundary value is not unitary (defect {defect:.3e})")]
    NormalizationFailure { defect: f64 },

    #[error("decomposition is inconsistent with its samples: Gram mismatch {mismatch:.3e}")]
    InconsistentDecomposition { mismatch: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("solver undecided after {iterations} iterations (residual {residual:.3e})")]
    Undecided {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
