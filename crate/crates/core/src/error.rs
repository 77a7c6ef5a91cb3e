use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller-side precondition was violated (bad level, negative time, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// The inputs are well-formed but outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configured size cap would be exceeded.
    #[error("resource cap exceeded: {what} = {requested} (maximum {limit})")]
    Resource {
        what: &'static str,
        requested: u64,
        limit: u64,
    },

    /// Rejection sampling ran out of attempts.
    #[error(
        "rejection budget exhausted after {attempts} attempts \
         (analytic acceptance probability {acceptance_probability:e})"
    )]
    RejectionBudget {
        attempts: u64,
        acceptance_probability: f64,
    },

    /// A string could not be parsed as a word.
    #[error("invalid word {input:?}: {reason}")]
    Parse { input: String, reason: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
