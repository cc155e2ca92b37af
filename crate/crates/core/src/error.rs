use thiserror::Error;

#[derive(Debug, Error)]
pub enum PtychoError {
    /// Invalid parameters or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {what} (expected {expected}, got {got})")]
    Shape {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    /// Input outside the domain of a metric, e.g. negative intensities.
    #[error("domain error: {0}")]
    Domain(String),

    /// A closed-form ω/u update hit a zero denominator.
    #[error("overlap violation in {block} update at pixel {pixel} (row {row}, col {col})")]
    OverlapViolation {
        block: &'static str,
        pixel: usize,
        row: usize,
        col: usize,
    },

    #[error("divergence at iteration {iter}: {detail}")]
    Divergence { iter: usize, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PtychoError>;

pub(crate) fn shape_err(what: &'static str, expected: impl ToString, got: impl ToString) -> PtychoError {
    PtychoError::Shape {
        what,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
