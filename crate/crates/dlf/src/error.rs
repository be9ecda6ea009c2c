//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An explicit advection step was asked to move information more than
    /// one cell per step.
    #[error("CFL violation at t = {time}: |Courant| = {courant} exceeds {limit}")]
    CflViolation { courant: f64, limit: f64, time: f64 },

    /// Innovation covariance could not be factorized, even after jitter.
    #[error("conditioning failure: {context}")]
    Conditioning { context: String },

    /// Mismatched vector/matrix dimensions or otherwise invalid arguments.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Bad experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A filter step failed; carries the step index and filter mode.
    #[error("{mode} step failed at n = {step}: {source}")]
    FilterStep {
        step: usize,
        mode: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
