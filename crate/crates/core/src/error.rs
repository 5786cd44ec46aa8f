use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// σ² exceeds the largest (1−ᾱ_t)/ᾱ_t the schedule can reach.
    #[error("noise level sigma = {sigma} is unreachable; the schedule supports sigma <= {max_sigma}")]
    UnreachableNoise { sigma: f64, max_sigma: f64 },

    #[error("reverse-SDE integration diverged at step {step}")]
    IntegrationDiverged { step: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
