use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    Empty { rows: usize, cols: usize },

    #[error("entry ({row}, {col}) = {value} is negative or not finite")]
    InvalidEntry { row: usize, col: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown class label `{0}`")]
    UnknownLabel(String),

    #[error("length mismatch: {what} ({left} vs {right})")]
    Length {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("model file format: {0}")]
    Format(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("every grid-search candidate failed to fit")]
    AllCandidatesFailed,

    #[error("repeat {index}: {source}")]
    Repeat {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used by the command-line frontend.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } | Error::Length { .. } => "E_SHAPE",
            Error::Empty { .. } => "E_EMPTY",
            Error::InvalidEntry { .. } | Error::Domain(_) => "E_DOMAIN",
            Error::Config(_) => "E_CONFIG",
            Error::Degenerate(_) => "E_DEGENERATE",
            Error::UnknownLabel(_) => "E_LABEL",
            Error::Data { .. } | Error::Csv(_) => "E_DATA",
            Error::Format(_) | Error::Json(_) => "E_FORMAT",
            Error::Version { .. } => "E_VERSION",
            Error::AllCandidatesFailed => "E_FIT",
            Error::Repeat { source, .. } | Error::Context { source, .. } => source.code(),
            Error::Io(_) => "E_IO",
        }
    }

    /// Wraps the error with a short description of what was being done.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Error::Shape { op, lhs, rhs }
    }
}
