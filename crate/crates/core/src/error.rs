use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    /// Raised when a sampler cannot make progress, e.g. rejection acceptance
    /// far below any usable rate.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("contradictory observations: {0}")]
    Contradiction(String),

    #[error("rank-deficient design: minimum Gram eigenvalue {min_eigenvalue:e}")]
    RankDeficient { min_eigenvalue: f64 },

    #[error("iteration limit reached after {iterations} iterations (residual {residual:e})")]
    IterationLimit { iterations: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("conditional expectation undefined: {0}")]
    UndefinedConditional(String),

    #[error("lift undefined: total padding is zero")]
    LiftUndefined,

    #[error("LP solver failure: {0}")]
    Solver(String),

    #[error("assertion failed: {0}")]
    Assertion(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
