use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("matrix is singular to working precision at pivot step {step}")]
    Singular { step: usize },

    /// `(I - h a_ii A_c)` could not be factored for an implicit stage.
    #[error("implicit stage {stage} matrix (I - h*a_ii*A_c) is singular at pivot step {pivot}; reduce the step size")]
    StiffStage { stage: usize, pivot: usize },

    #[error("iteration diverged at step {step}: state became non-finite")]
    Divergence { step: usize },

    #[error("matrix exponential overflowed while computing {0}")]
    Overflow(String),

    #[error("model validation failed: {0}")]
    Validation(ValidationReport),

    #[error("problem dimension {dim} exceeds the configured cap {cap}")]
    SizeCap { dim: usize, cap: usize },

    #[error("stage cost is not strictly convex in the input at step {step}")]
    NotConvex { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("malformed model file: {0}")]
    ModelFormat(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Io { .. } => 2,
            Error::ModelFormat(_)
            | Error::Validation(_)
            | Error::Dimension(_)
            | Error::NotSquare { .. }
            | Error::NotConvex { .. } => 3,
            Error::NonFinite(_)
            | Error::Singular { .. }
            | Error::StiffStage { .. }
            | Error::Divergence { .. }
            | Error::Overflow(_) => 4,
            Error::SizeCap { .. } => 5,
        }
    }
}
