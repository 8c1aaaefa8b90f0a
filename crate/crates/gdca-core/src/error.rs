//! Error type shared by the whole core crate.

use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// Incompatible or invalid tensor/image shapes.
    #[error("shape error: {0}")]
    Shape(String),

    /// Elementwise math applied outside its domain (e.g. log of a
    /// non-positive value). Carries the flat index of the offending element.
    #[error("domain error in {op}: invalid value at flat index {index}")]
    Domain { op: &'static str, index: usize },

    /// API contract violation: tape misuse, mismatched parameter lists, and
    /// similar caller bugs that are not shape arithmetic.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input too small for the requested operation (patch sampling).
    #[error("size error: {0}")]
    Size(String),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn size(msg: impl Into<String>) -> Self {
        Error::Size(msg.into())
    }
}
