use std::fmt;

/// Broad classification of failures, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A file, header or document could not be parsed.
    MalformedInput,
    /// Well-formed input that violates a domain invariant (shape, range, budget).
    InvariantViolation,
    /// Operating system I/O failure.
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value at index {index} of {what}")]
    NonFinite { what: &'static str, index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("target sample {0} is already labeled")]
    AlreadyLabeled(usize),

    #[error("requested {requested} samples but only {available} are available")]
    NotEnoughSamples { requested: usize, available: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: Magic, found: Magic },

    #[error("unsupported {what} version {version}")]
    UnsupportedVersion { what: &'static str, version: u32 },

    #[error("truncated {what}: needed {needed} bytes, {available} available")]
    Truncated {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("size overflow in {0}")]
    Overflow(&'static str),

    #[error("{count} trailing bytes after {what} payload")]
    TrailingBytes { what: &'static str, count: usize },

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite { .. }
            | Error::ShapeMismatch(_)
            | Error::InvalidParameter(_)
            | Error::InvalidConfig(_)
            | Error::LabelOutOfRange { .. }
            | Error::AlreadyLabeled(_)
            | Error::NotEnoughSamples { .. }
            | Error::Empty(_) => ErrorKind::InvariantViolation,
            Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Truncated { .. }
            | Error::Overflow(_)
            | Error::TrailingBytes { .. }
            | Error::Malformed { .. }
            | Error::Json(_)
            | Error::Csv(_) => ErrorKind::MalformedInput,
            Error::Io(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn malformed(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Malformed {
            what,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Four-byte file signature, printed as text when it is printable ASCII.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Magic(pub [u8; 4]);

impl fmt::Display for Magic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|b| b.is_ascii_graphic()) {
            write!(f, "\"{}\"", String::from_utf8_lossy(&self.0))
        } else {
            write!(f, "{:02x?}", self.0)
        }
    }
}

/// Rejects the first non-finite entry of `values`.
pub(crate) fn ensure_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}
