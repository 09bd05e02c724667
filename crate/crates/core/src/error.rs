use thiserror::Error;

/// Errors raised by constructors and theorem-input validation.
///
/// The variants split into three groups that callers (notably the CLI) map
/// to distinct exit codes: malformed input, failed theorem hypotheses, and
/// numerical failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn hypothesis(reason: impl Into<String>) -> Self {
        Error::Hypothesis(reason.into())
    }

    pub fn is_hypothesis(&self) -> bool {
        matches!(self, Error::Hypothesis(_))
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
