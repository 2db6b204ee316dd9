use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("observation index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid perturbation scheme: {0}")]
    InvalidScheme(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("failed to find a finite initial point after {attempts} attempts")]
    InitFailure { attempts: usize },

    #[error("cannot normalize: all divergences are zero")]
    AllZero,

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("observation {index}: {source}")]
    Observation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} replications failed (more than 5%)")]
    StudyFailed { failed: usize, total: usize },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
