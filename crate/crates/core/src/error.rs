use thiserror::Error;

/// Unified error type for the core crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation argument violated its documented range.
    #[error("invalid parameter `{param}`: {value} ({constraint})")]
    InvalidParameter {
        param: &'static str,
        value: String,
        constraint: &'static str,
    },

    /// Two arguments disagree on dimensions.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A text trace line failed to parse.
    #[error("trace parse error at line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    /// A binary snapshot or checkpoint is malformed or truncated.
    #[error("corrupt {what}: {reason}")]
    Corrupt { what: &'static str, reason: String },

    /// A snapshot/checkpoint was written by an incompatible format version.
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    /// A checkpoint's architecture does not match the expected configuration.
    #[error("incompatible checkpoint: {reason}")]
    IncompatibleCheckpoint { reason: String },

    /// A 32-bit counter would overflow.
    #[error("counter saturation: increment of {delta} at {context} exceeds u32 range")]
    CounterSaturation { context: &'static str, delta: u64 },

    /// An operation that needs observed data was given an all-zero sketch.
    #[error("empty sketch: {context}")]
    EmptySketch { context: &'static str },

    /// Training diverged; the model was left at its last finite state.
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },

    /// The iterative path cannot handle the requested problem.
    #[error("unsupported operation: {reason}")]
    Unsupported { reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(
        param: &'static str,
        value: impl std::fmt::Display,
        constraint: &'static str,
    ) -> Self {
        Error::InvalidParameter {
            param,
            value: value.to_string(),
            constraint,
        }
    }
}
