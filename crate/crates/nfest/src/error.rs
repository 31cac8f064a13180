use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum NfestError {
    #[error("index ({0}, {1}) out of range for {2}x{3} array")]
    IndexOutOfRange(usize, usize, usize, usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, NfestError>;
