use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// A selected user has zero effective gain `q^H h_u`.
    #[error("degenerate channel for user {user}: zero effective gain")]
    DegenerateChannel { user: usize },

    /// A configuration is inconsistent or exceeds a supported limit.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed IDX payload.
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
