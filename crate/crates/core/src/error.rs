use thiserror::Error;

/// Errors raised by mechanism construction, accounting and verification.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index {index} is out of range for {len} mechanisms")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("mechanism {index} (`{label}`) does not carry the required {expected} guarantee")]
    GuaranteeMismatch {
        index: usize,
        label: String,
        expected: String,
    },

    #[error("pmf support must be sorted ascending without duplicates")]
    UnsortedSupport,

    #[error("pmf supports differ")]
    SupportMismatch,

    #[error("step {step}: declared ex-post budget fails the exact check (sum {sum})")]
    Uncertified { step: usize, sum: f64 },

    #[error("step {step}: exact output distributions are required for enumeration")]
    NotEnumerable { step: usize },

    #[error("invalid histogram: {0}")]
    Histogram(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
