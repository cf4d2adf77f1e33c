use thiserror::Error;

/// Errors raised by the statistical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A series or iterative solver hit its iteration cap.
    #[error("no convergence in {what} after {iterations} iterations")]
    Convergence { what: String, iterations: usize },

    /// The result cannot be represented without overflow.
    #[error("overflow: {0}")]
    Overflow(String),

    /// The sample carries no information about the requested parameter.
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("means differ: {lower} vs {upper}")]
    MeanMismatch { lower: f64, upper: f64 },

    /// The test statistic is undefined for this sample.
    #[error("test not applicable: {0}")]
    Inapplicable(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

impl Error {
    /// The message without the variant prefix.
    pub fn message(&self) -> String {
        match self {
            Error::Domain(m) | Error::Overflow(m) | Error::Degenerate(m) | Error::Inapplicable(m) | Error::Parse(m) => {
                m.clone()
            }
            other => other.to_string(),
        }
    }
}
