use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// A lookup fell outside the available range (e.g. a frequency beyond Nyquist).
    #[error("out of range: {0}")]
    Range(String),

    /// Caller broke an interface contract (wrong dimensions, wrong state kind).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Propagation produced non-finite amplitudes.
    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    /// A least-squares fit could not be carried out.
    #[error("fit failed: {0}")]
    Fit(String),

    /// Configuration document or flag problem; the message names the offending key.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
