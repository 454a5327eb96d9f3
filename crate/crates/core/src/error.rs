use thiserror::Error;

/// Errors produced by the Koopman learning pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KoopmanError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("monomial {0:?} is not part of the global dictionary")]
    MissingMonomial(Vec<u32>),

    #[error("local model {subsystem} has a constant row that is neither the unit row nor zero")]
    ConstantMismatch { subsystem: usize },

    #[error("integration blew up at step {step}")]
    BlowUp { step: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("decomposition is defective (biorthonormality residual {residual:.3e}); use matrix powers")]
    Defective { residual: f64 },

    #[error("prediction has imaginary residue {0:.3e}")]
    ComplexResidue(f64),

    #[error("relative error undefined for a zero-norm reference state")]
    ZeroNorm,
}

pub type Result<T> = std::result::Result<T, KoopmanError>;
