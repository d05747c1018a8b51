use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown {kind} `{name}`; valid names: {valid}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        valid: String,
    },

    #[error("kernel file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

pub(crate) fn dimension(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> Error {
    Error::Numerical(msg.into())
}

/// Rejects singularity orders at or below one half, where the terminal state is not defined.
pub fn require_lq_beta(beta: f64) -> Result<()> {
    if beta > 0.5 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "singularity order beta must lie in (1/2, 1) for the terminal state to exist, got {beta}"
        )))
    }
}
