use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelRange {
        row: usize,
        label: u64,
        classes: usize,
    },

    #[error("class {class} has no examples")]
    EmptyClass { class: usize },

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },

    #[error("non-finite condensation objective at outer loop {outer}, step {step}")]
    CondenseDiverged { outer: usize, step: usize },

    #[error("budget allocates 0 examples to class {class}; use a larger fraction (at least {min_fraction:.4})")]
    ZeroBudget { class: usize, min_fraction: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::ZeroBudget { .. } => ErrorKind::Config,
            Error::NonFinite(_) | Error::Diverged { .. } | Error::CondenseDiverged { .. } => {
                ErrorKind::Numerical
            }
            Error::DimensionMismatch { .. }
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::Truncated(_)
            | Error::TrailingBytes(_)
            | Error::LabelRange { .. }
            | Error::EmptyClass { .. }
            | Error::Parse { .. }
            | Error::Empty(_)
            | Error::Io(_) => ErrorKind::Data,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
