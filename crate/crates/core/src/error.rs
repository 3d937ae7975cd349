use thiserror::Error;

/// Failure modes shared by every module of the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("basis is singular or not square (det = {det})")]
    NonInvertibleBasis { det: f64 },

    #[error("enumeration visited more than {budget} nodes")]
    EnumerationBudgetExceeded { budget: u64 },

    #[error("generators are rank deficient")]
    RankDeficient,

    #[error("input vector is zero")]
    ZeroInput,

    #[error("time step {dt} with maximal weight {max_weight} exceeds the representable range")]
    DynamicRangeExceeded { dt: f64, max_weight: f64 },

    #[error("curve shape not supported: {0}")]
    UnsupportedCurveShape(String),

    #[error("matrix is not nilpotent")]
    NotNilpotent,

    #[error("method is not valid for mu = {mu}: {reason}")]
    InvalidMethodForMu { mu: f64, reason: String },

    #[error("vector is not primitive (gcd = {gcd})")]
    NonPrimitiveVector { gcd: String },

    #[error("sample too small: {got} < {needed}")]
    SampleTooSmall { got: usize, needed: usize },

    #[error("derivative vanishes at the evaluation point")]
    DerivativeVanishes,

    #[error("unsupported degree {0}")]
    UnsupportedDegree(usize),

    #[error("root isolation failed: {0}")]
    RootIsolationFailure(String),

    #[error("invalid interval family: {0}")]
    InvalidFamily(String),

    #[error("increment {increment} at step {step} exceeds its bound {bound}")]
    IncrementBoundViolated { step: usize, increment: f64, bound: f64 },

    #[error("dilated intervals overlap at level {level}")]
    DilationOverlap { level: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
