use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Step size outside the contraction window `(0, 2 alpha / L^2)`.
    #[error("invalid step size {gamma}: must lie in (0, {upper})")]
    InvalidStepSize { gamma: f64, upper: f64 },

    #[error("non-finite iterate at outer iteration {t}: {detail}")]
    NonFinite { t: usize, detail: String },

    #[error("missing iterate history: need v^{needed}, have {available} entries")]
    MissingHistory { needed: usize, available: usize },

    #[error(
        "fixed-point oracle exceeded its budget of {budget} iterations (last step {last_step:e})"
    )]
    OracleBudget { budget: usize, last_step: f64 },

    #[error("problem construction failed: {0}")]
    Problem(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
