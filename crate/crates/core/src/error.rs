use thiserror::Error;

/// One Newton iteration as recorded by the moment solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Max-norm of the mean moment vector at the start of the iteration.
    pub moment_norm: f64,
    /// Max-norm of the coefficient vector.
    pub theta_norm: f64,
    /// Accepted step length after halving.
    pub step: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("solver did not converge after {} iterations ({reason})", trace.len())]
    NonConvergence {
        reason: String,
        trace: Vec<IterationRecord>,
    },

    #[error("estimating equation has no root: {0}")]
    NoRoot(String),

    #[error("reference coefficient {index} is degenerate ({value:e})")]
    DegenerateReference { index: usize, value: f64 },

    #[error("correlation undefined for constant feature column {0}")]
    UndefinedCorrelation(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }

    /// True for failures of the numerical routines (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign(_)
                | Error::NonConvergence { .. }
                | Error::NoRoot(_)
                | Error::DegenerateReference { .. }
                | Error::UndefinedCorrelation(_)
        )
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::InvalidArgument(_) => 2,
            e if e.is_numerical() => 4,
            _ => 3,
        }
    }
}
