use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate ellipse: major axis {major} must exceed minor axis {minor} > 0")]
    DegenerateEllipse { major: f64, minor: f64 },

    #[error("Jacobian is singular at focal point (mu={mu}, theta={theta})")]
    FocalSingularity { mu: f64, theta: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("exponential fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("degeneracy field is nonpositive ({value}) at interior node (i={i}, j={j})")]
    NonpositiveDegeneracy { i: usize, j: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("source overflow: component {index} has value {value} >= {limit}")]
    SourceOverflow { index: usize, value: f64, limit: f64 },

    #[error("linear solve failed: pivot {pivot:e} at row {row}")]
    SolveFailure { row: usize, pivot: f64 },

    #[error("monotonicity violated at step {step}: component {index} decreased by {decrease:e}")]
    MonotonicityViolation { step: usize, index: usize, decrease: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("dense materialization capped at {cap} unknowns, requested {requested}")]
    DenseCap { cap: usize, requested: usize },

    #[error("checkpoint version mismatch: found {found:?}, expected {expected:?}")]
    CheckpointVersion { found: String, expected: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("baseline run did not quench")]
    BaselineNotQuenched,

    #[error("run did not quench: {0}")]
    NotQuenched(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
