use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("bit width {0} outside 1..=8")]
    WidthOutOfRange(u8),

    #[error("codes mix bit widths {expected} and {found}")]
    MixedWidths { expected: u8, found: u8 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("quantized distance {value} exceeds upper bound {max}")]
    DistanceOutOfRange { value: u64, max: u64 },

    #[error("padding bit set in plane {plane}, word {word}")]
    PaddingBitSet { plane: usize, word: usize },

    #[error("zero-norm rows cannot be normalized: {0:?}")]
    ZeroNormRows(Vec<usize>),

    #[error("bad magic bytes {0:?}, not an XFBQ index")]
    BadMagic([u8; 4]),

    #[error("unsupported index version {0}")]
    UnsupportedVersion(u32),

    #[error("index truncated while reading {section}")]
    Truncated { section: &'static str },

    #[error("{0} unexpected trailing bytes after index payload")]
    TrailingBytes(u64),

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
