use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("alphabet or truncation mismatch: {0}")]
    Mismatch(String),
    #[error("series has zero constant term")]
    ZeroConstantTerm,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point {0} is not in the upper half-plane")]
    NotInUpperHalfPlane(Complex64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("eta product exponents violate sum d*e = 0 mod 24 (sum = {0})")]
    EtaCongruence(i64),
    #[error("not a Fricke eigenform: best residual {0:e}")]
    NotEigenform(f64),
    #[error("span of the family is not stable: {0}")]
    NotStable(String),
    #[error("depth {depth} exceeds the configured maximum {max}")]
    DepthTooLarge { depth: usize, max: usize },
    #[error("step refinement disagreement {0:e} exceeds tolerance {1:e}")]
    StepsTooFew(f64, f64),
    #[error("Hecke eigenvalue validation failed: residual {0:e}")]
    HeckeValidation(f64),
    #[error("no common convergence point: {0}")]
    NoCommonPoint(String),
    #[error("engines disagree: {0:e}")]
    EnginesDisagree(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
