use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate class distribution: {0}")]
    DegenerateClass(String),

    #[error("nothing to evaluate: all (document, requirement) pairs were skipped")]
    EmptyEvaluation,

    #[error("unknown requirement: {0}")]
    UnknownRequirement(String),

    #[error("catalog fingerprint mismatch: checkpoint {checkpoint}, catalog {catalog}")]
    FingerprintMismatch { checkpoint: String, catalog: String },

    #[error("storage error: {0}")]
    Storage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes, used for process exit codes and HTTP status mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Parse,
    Numeric,
    Io,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Usage => "usage",
            ErrorCategory::Parse => "parse",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Io => "io",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 2,
            ErrorCategory::Parse => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Io => 5,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse { .. } | Error::Schema(_) => ErrorCategory::Parse,
            Error::Numerical(_) | Error::Shape { .. } | Error::DegenerateClass(_) => {
                ErrorCategory::Numeric
            }
            Error::Storage(_) | Error::Io(_) => ErrorCategory::Io,
            Error::NotFound(_)
            | Error::InvalidInput(_)
            | Error::EmptyEvaluation
            | Error::UnknownRequirement(_)
            | Error::FingerprintMismatch { .. } => ErrorCategory::Usage,
        }
    }

    pub(crate) fn from_json(err: serde_json::Error, bytes: &[u8]) -> Self {
        Error::Parse {
            offset: byte_offset(bytes, err.line(), err.column()),
            message: err.to_string(),
        }
    }
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut line_start = 0;
    for (i, b) in bytes.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            line_start = i + 1;
        }
    }
    (line_start + column.saturating_sub(1)).min(bytes.len())
}
