use thiserror::Error;

/// Errors reported by every fallible operation in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {param} {reason}")]
    Domain { param: &'static str, reason: String },

    /// The caller violated an API contract (mismatched lengths, bad index).
    #[error("usage error: {0}")]
    Usage(String),

    /// The requested codebook is too large to index or search.
    #[error("capacity error: n*B = {n_rate} exceeds the limit of {limit} bits (n = {n}, B = {rate})")]
    Capacity {
        n: usize,
        rate: String,
        n_rate: f64,
        limit: u32,
    },

    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Failures while decoding a `.qgsm` byte stream.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("bad magic: expected \"QGSM\", found {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0} (expected 1)")]
    UnsupportedVersion(u8),
    #[error("truncated stream: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("invalid header field {field}: {reason}")]
    InvalidHeader { field: &'static str, reason: String },
    #[error("{field} index {index} out of range for codebook of size {size}")]
    IndexOutOfRange {
        field: &'static str,
        index: u64,
        size: u64,
    },
    #[error("nonzero padding bits after payload")]
    NonzeroPadding,
    #[error("trailing bytes: {0} unexpected bytes after payload")]
    TrailingBytes(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(param: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        param,
        reason: reason.into(),
    }
}
