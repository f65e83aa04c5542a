use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("overflow in {what} at x = {x}")]
    Overflow { what: &'static str, x: f64 },

    #[error("invalid {key} = {value} (accepted: {expected})")]
    Validation {
        key: String,
        value: String,
        expected: String,
    },

    #[error("{what} did not converge after {iterations} iterations")]
    Convergence { what: String, iterations: usize },

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("integration failed at level {level}, t = {t:e} s: {reason}")]
    Integration {
        level: usize,
        t: f64,
        reason: String,
    },
}

impl Error {
    pub fn validation(key: &str, value: impl ToString, expected: &str) -> Self {
        Error::Validation {
            key: key.to_string(),
            value: value.to_string(),
            expected: expected.to_string(),
        }
    }

    pub fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation { .. } | Error::Domain { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
