use std::fmt;

/// Errors emitted by tensor math, transforms, model construction, and I/O.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes that must agree do not; the message names both shapes.
    Dimension(String),
    /// A model or run configuration is invalid (caught at construction time).
    Config(String),
    /// Non-finite values where finite ones are required.
    Numeric(String),
    /// A value was used under the wrong convention (e.g. spectrum tag mismatch).
    Contract(String),
    /// Bad caller-supplied data (out-of-range label, empty dataset, ...).
    Input(String),
    /// Manifest parse failure, addressed by 1-based row number.
    Parse { row: usize, message: String },
    /// Checkpoint format violation, addressed by byte offset.
    Format { offset: u64, message: String },
    /// Image decode failure; the message names the path.
    Decode(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::Contract(m) => write!(f, "contract error: {m}"),
            Error::Input(m) => write!(f, "input error: {m}"),
            Error::Parse { row, message } => write!(f, "parse error at row {row}: {message}"),
            Error::Format { offset, message } => {
                write!(f, "format error at byte {offset}: {message}")
            }
            Error::Decode(m) => write!(f, "decode error: {m}"),
            Error::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
