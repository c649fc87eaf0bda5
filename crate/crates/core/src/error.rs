//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or parameter shapes do not agree.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// Group count does not divide the channel counts.
    #[error("groups={groups} must divide input channels {cin} and output channels {cout}")]
    InvalidGroups { groups: usize, cin: usize, cout: usize },

    /// Class label outside the valid range.
    #[error("label {value} out of range (expected < {num_classes})")]
    InvalidLabel { value: usize, num_classes: usize },

    /// A configuration value is out of its documented range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An operation received an empty input it cannot handle.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// File starts with the wrong magic bytes.
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    /// File ended before the declared payload was complete.
    #[error("truncated file while reading {0}")]
    Truncated(&'static str),

    /// Unsupported format version byte.
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    /// A numerical routine produced or detected an invalid value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch { expected: expected.into(), got: got.into() }
    }

    /// Helper for shape errors built from slices.
    pub fn shape_of(expected: &[usize], got: &[usize]) -> Self {
        Self::shape(format!("{expected:?}"), format!("{got:?}"))
    }
}
