use thiserror::Error;

/// Errors raised by the estimation and testing routines.
#[derive(Debug, Error)]
pub enum HamtError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate grid: all observations share x = {0}")]
    DegenerateGrid(f64),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature did not converge on [{lo}, {hi}]: relative change {rel_change:e} after {evaluations} evaluations")]
    Quadrature {
        lo: f64,
        hi: f64,
        rel_change: f64,
        evaluations: usize,
    },

    #[error("mFDR curve is not monotone: Q({t_lo}) = {q_lo} > Q({t_hi}) = {q_hi}")]
    NonMonotone {
        t_lo: f64,
        q_lo: f64,
        t_hi: f64,
        q_hi: f64,
    },

    #[error("unknown scenario `{name}`; valid names: {valid}")]
    UnknownScenario { name: String, valid: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HamtError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(HamtError::Domain(msg.into()))
}
