use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A required section or key is absent from an instance file.
    #[error("format error: missing {0}")]
    MissingSection(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape error: expected {expected:?}, got {got:?}")]
    Shape { expected: Vec<usize>, got: Vec<usize> },

    #[error("state error: {0}")]
    State(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The LP became infeasible; `row` names a row that cannot be satisfied.
    #[error("LP infeasible (row {row})")]
    Infeasible { row: usize },

    #[error("iteration limit reached in LP solve")]
    LpIterationLimit,

    #[error("separation timed out")]
    Timeout,

    #[error("positive weight undefined: no positive labels")]
    NoPositives,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error stems from bad user input rather than an internal fault.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            Error::Infeasible { .. } | Error::LpIterationLimit | Error::State(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
