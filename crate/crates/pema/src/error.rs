//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants are grouped by how a
//! caller should react: `Input`/`Config` are caller mistakes, `Format` is a
//! damaged or foreign file (with the byte offset where parsing stopped),
//! `Transport`/`Protocol`/`Integrity` cover the wire, and `Contract` flags a
//! misuse of an API invariant (e.g. mutating frozen weights).

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Shape mismatch between tensors; names both shapes.
    Dimension(String),
    /// Non-finite or otherwise unusable numeric input.
    NumericInput(String),
    /// Index out of range (e.g. target token id beyond the vocabulary).
    Index(String),
    /// Invalid configuration value.
    Config(String),
    /// Invalid caller-supplied input (empty corpus, empty context, ...).
    Input(String),
    /// Malformed file; `offset` is the byte position of the first problem.
    Format { offset: u64, message: String },
    /// Underlying I/O failure.
    Io(std::io::Error),
    /// API invariant violated (e.g. writing to frozen weights).
    Contract(String),
    /// Connection-level failure (distinct from a well-formed error reply).
    Transport(String),
    /// The peer answered, but not with what the protocol requires.
    Protocol(String),
    /// Checksum mismatch between advertised and received payloads.
    Integrity(String),
    /// A remote memory build died partway; names the last finished sentence.
    PartialBuild {
        last_completed: Option<u32>,
        message: String,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension mismatch: {m}"),
            Error::NumericInput(m) => write!(f, "numeric input error: {m}"),
            Error::Index(m) => write!(f, "index error: {m}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Input(m) => write!(f, "input error: {m}"),
            Error::Format { offset, message } => {
                write!(f, "format error at byte {offset}: {message}")
            }
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Contract(m) => write!(f, "contract violation: {m}"),
            Error::Transport(m) => write!(f, "transport error: {m}"),
            Error::Protocol(m) => write!(f, "protocol error: {m}"),
            Error::Integrity(m) => write!(f, "integrity error: {m}"),
            Error::PartialBuild {
                last_completed,
                message,
            } => match last_completed {
                Some(id) => write!(
                    f,
                    "partial build: last completed sentence {id}; {message}"
                ),
                None => write!(f, "partial build: no sentence completed; {message}"),
            },
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl Error {
    /// True for errors caused by user-facing input: bad flags, bad files,
    /// incompatible artifacts. The CLI maps these to exit code 1 and
    /// everything else to exit code 2.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::NumericInput(_)
                | Error::Index(_)
                | Error::Config(_)
                | Error::Input(_)
                | Error::Format { .. }
                | Error::Io(_)
        )
    }
}
