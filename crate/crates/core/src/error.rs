use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum SnnError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix and vectors must be non-empty")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("every eigenvalue of FF^T is zero")]
    AllZeroMatrix,
    #[error("entry {index} is negative ({value:e}) for a non-negative problem")]
    NegativeEntry { index: usize, value: f64 },
    #[error("operation is not supported for problem kind {0}")]
    UnsupportedKind(&'static str),
    #[error("dual point violates the polytope by {violation:e}")]
    InfeasibleDualPoint { violation: f64 },
    #[error("primal point is infeasible: {0}")]
    InfeasiblePrimalPoint(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("spike cascade did not settle after {rounds} rounds at step {step}")]
    CascadeDivergence { step: u64, rounds: usize },
    #[error("step limit of {0} steps exceeded")]
    StepLimitExceeded(u64),
    #[error("firing rate is undefined before the first step")]
    ZeroSteps,
    #[error("conservation identity only holds for non-leaky networks")]
    LeakyNotSupported,
    #[error("enumeration needs {required} subsets, cap is {cap}")]
    EnumerationCapExceeded { required: u128, cap: u128 },
    #[error("row {row} has norm {norm}, unit rows required")]
    RowsNotNormalized { row: usize, norm: f64 },
    #[error("no ideal cell contains the point")]
    NoCellFound,
    #[error("{0} ideal cells contain the point")]
    MultipleCells(usize),
    #[error("point lies outside the dual polytope (violation {0:e})")]
    PointOutsidePolytope(f64),
    #[error("target is not in the row space of F (distance {0:e})")]
    Infeasible(f64),
    #[error("iteration cap of {0} reached")]
    IterationCapExceeded(u64),
    #[error("niceness parameter is zero")]
    GammaZero,
    #[error("projected signal x_F is zero")]
    ZeroSignal,
    #[error("trace is incompatible with the instance and parameters: {0}")]
    IncompatibleTrace(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = SnnError> = std::result::Result<T, E>;
