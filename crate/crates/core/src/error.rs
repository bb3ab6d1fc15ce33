use thiserror::Error;

use crate::data::ValidationReport;

/// Errors raised by the model, samplers and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no subjects")]
    NoSubjects,

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("dataset failed validation:\n{0}")]
    InvalidDataset(ValidationReport),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix not positive definite after jitter ({0})")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate griddy weights")]
    DegenerateGriddyWeights,

    #[error("unknown subject id {0:?}")]
    UnknownSubject(String),

    #[error("category unreachable: no observation reaches category {0}")]
    CategoryUnreachable(usize),

    #[error("unknown kernel case id {0}")]
    UnknownKernelCase(u32),

    #[error("gibbs step {step} failed: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn in_step(self, step: &'static str) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// `true` for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite(_) | Error::DegenerateGriddyWeights => true,
            Error::Step { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
