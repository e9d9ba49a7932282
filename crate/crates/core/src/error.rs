use thiserror::Error;

/// Errors raised by the `nfde` library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid history: {0}")]
    InvalidHistory(String),

    #[error("invalid difference operator: {0}")]
    InvalidOperator(String),

    #[error("invalid right-hand side: {0}")]
    InvalidRhs(String),

    #[error("unknown primitive nonlinearity `{0}`")]
    UnknownNonlinearity(String),

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    Dimension {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("history horizon {horizon} is shorter than the required {required}")]
    Horizon { horizon: f64, required: f64 },

    #[error("invalid comparison function: {0}")]
    InvalidComparison(String),

    #[error("torus sweep over {p} delays is not supported (limit {limit})")]
    UnsupportedSweep { p: usize, limit: usize },

    #[error("invalid step policy: {0}")]
    StepPolicy(String),

    #[error("time {t} is outside the trajectory range [0, {t_end}]")]
    OutOfRange { t: f64, t_end: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("functional evaluation failed: {0}")]
    Evaluation(String),

    #[error("constant fit impossible: {0}")]
    FitImpossible(String),

    #[error("invalid input signal: {0}")]
    InvalidInput(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
