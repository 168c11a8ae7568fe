use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("{what} ({value}) is not divisible by {by}")]
    Divisibility {
        what: &'static str,
        value: usize,
        by: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    /// Malformed or unsupported image data.
    #[error("image format error: {0}")]
    Format(String),

    /// Weight container or model spec problems; the CLI maps these to exit code 4.
    #[error("model binding error: {0}")]
    Binding(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn binding(msg: impl Into<String>) -> Self {
        Error::Binding(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
