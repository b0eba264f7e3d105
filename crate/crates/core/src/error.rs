use thiserror::Error;

/// Error taxonomy for the whole crate. The CLI maps these onto its exit-code
/// contract: usage problems exit 1, `Format`/`Io` exit 2, `Shape`/`Domain`/
/// `NonFinite` exit 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up (wrong rank, mismatched dims, bad
    /// kernel/bias sizes, zero-sized outputs).
    #[error("shape error: {0}")]
    Shape(String),

    /// Inputs violate a mathematical precondition (e.g. non-positive step
    /// sizes, window not dividing the grid, tile larger than the scene).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed serialized data. `offset` is the byte position at which the
    /// parse gave up.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    /// A computation produced NaN or Inf from finite inputs.
    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
