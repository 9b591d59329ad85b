use thiserror::Error;

/// Errors raised by CGF construction, model evaluation and the oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter for {kind}: {reason}")]
    InvalidParameter { kind: String, reason: String },

    #[error("domain violation{}: {detail}", step_suffix(*.step))]
    DomainViolation { step: Option<usize>, detail: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid history: {0}")]
    InvalidHistory(String),

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("truncation failure: {0}")]
    Truncation(String),

    #[error("inconsistent saddlepoints: {0}")]
    Inconsistent(String),

    #[error("optimizer failure: {0}")]
    Optimizer(String),
}

fn step_suffix(step: Option<usize>) -> String {
    match step {
        Some(n) => format!(" at step {n}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(detail: impl Into<String>) -> Self {
        Error::DomainViolation {
            step: None,
            detail: detail.into(),
        }
    }

    pub(crate) fn param(kind: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            kind: kind.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(context: &str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            got,
        }
    }

    /// Attaches a step index to a domain violation that does not carry one yet.
    pub(crate) fn at_step(self, n: usize) -> Self {
        match self {
            Error::DomainViolation { step: None, detail } => Error::DomainViolation { step: Some(n), detail },
            other => other,
        }
    }

    pub fn is_domain_violation(&self) -> bool {
        matches!(self, Error::DomainViolation { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
