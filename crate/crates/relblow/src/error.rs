use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// State violates |u| < c or √∂ρP < c.
    #[error("inadmissible state: {0}")]
    Admissibility(String),

    /// Weight functions diverge at vacuum (z = w) or below the lower gap.
    #[error("singular weight: {0}")]
    SingularWeight(String),

    #[error("{method} failed to converge after {iterations} iterations: {detail}")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("primitive recovery failed in cell {cell} at t = {t}: {detail}")]
    Recovery { cell: usize, t: f64, detail: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// Data the theory does not cover (vacuum, violated assumptions).
    #[error("outside theory: {0}")]
    OutsideTheory(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
