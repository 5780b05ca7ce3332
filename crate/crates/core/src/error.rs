use thiserror::Error;

use crate::data::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A design column is (numerically) a linear combination of the others.
    #[error("rank-deficient design: column `{column}` is linearly dependent on earlier columns")]
    RankDeficient { column: String },

    /// Logistic maximum likelihood diverges (quasi-complete separation).
    #[error("logistic fit diverges (quasi-complete separation){}", context_suffix(.context))]
    Separation { context: Option<String> },

    #[error("estimating-equation bread matrix is singular")]
    SingularBread,

    #[error("arm {arm} has {size} subjects; at least {required} are needed")]
    DegenerateArm {
        arm: usize,
        size: usize,
        required: usize,
    },

    #[error("{failed} of {runs} simulation runs failed (more than 5%)")]
    TooManyFailures { failed: usize, runs: usize },

    #[error("dataset failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn context_suffix(context: &Option<String>) -> String {
    context
        .as_ref()
        .map(|c| format!(" in {c}"))
        .unwrap_or_default()
}

impl Error {
    /// Process exit code: 2 for input/validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient { .. }
            | Error::Separation { .. }
            | Error::SingularBread
            | Error::DegenerateArm { .. }
            | Error::TooManyFailures { .. } => 3,
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::InvalidInput(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
        }
    }

    pub(crate) fn separation() -> Self {
        Error::Separation { context: None }
    }

    /// Attaches a location (e.g. "arm 2 working model") to a separation error.
    pub fn in_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::Separation { context: None } => Error::Separation {
                context: Some(ctx.into()),
            },
            other => other,
        }
    }
}
