use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("truncation level must be positive")]
    ZeroLevel,
    #[error("multi-index {indices:?} is invalid for dimension {dim} and level {level}")]
    InvalidMultiIndex {
        indices: Vec<usize>,
        dim: usize,
        level: usize,
    },
    #[error("flat position {pos} is out of range for {len} coefficients")]
    PositionOutOfRange { pos: usize, len: usize },
    #[error("signature shape mismatch: ({dim_a}, {level_a}) vs ({dim_b}, {level_b})")]
    ShapeMismatch {
        dim_a: usize,
        level_a: usize,
        dim_b: usize,
        level_b: usize,
    },
    #[error("expected {expected} coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("path has no points")]
    EmptyPath,
    #[error("empty sequence")]
    EmptySequence,
    #[error("point {index} has dimension {got}, expected {expected}")]
    InconsistentDimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("feature schema mismatch in turn {turn}")]
    SchemaMismatch { turn: usize },
    #[error("invalid turn {index}: {reason}")]
    InvalidTurn { index: usize, reason: String },
    #[error("no turns for the requested speaker")]
    NoTurns,
    #[error("sequences must have equal length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least {needed} observations required, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("correlation undefined for a constant input")]
    ConstantInput,
    #[error("both classes must be present")]
    SingleClass,
    #[error("logistic regression did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse term name {0:?}")]
    TermParse(String),
    #[error("subject sets are not aligned for fusion")]
    MisalignedSubjects,
    #[error("no features selected for held-out subject {subject}")]
    NoFeaturesSelected { subject: String },
}
