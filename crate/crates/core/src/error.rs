use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform for the requested operation.
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// A documented precondition was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed input file.
    #[error("format error in {path} (line {line}): {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    /// Preprocessing cannot proceed (e.g. a feature with no observed values).
    #[error("preprocessing error: {0}")]
    Preprocess(String),

    /// A requested split cannot be produced.
    #[error("split error: {0}")]
    Split(String),

    /// A metric is undefined on the given inputs (e.g. single-class labels).
    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Divergence {
        epoch: usize,
        batch: usize,
        message: String,
    },

    /// A checkpoint could not be written or read back consistently.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
