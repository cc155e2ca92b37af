use std::fmt;

use ptycho_core::PtychoError;

/// Process exit codes.
pub mod code {
    pub const OK: u8 = 0;
    /// I/O failure while writing outputs.
    pub const IO: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const DIVERGENCE: u8 = 4;
    pub const OVERLAP: u8 = 5;
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(code::CONFIG, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn exit_code(err: &PtychoError) -> u8 {
    match err {
        PtychoError::Config(_) => code::CONFIG,
        PtychoError::Shape { .. } | PtychoError::Index { .. } | PtychoError::Domain(_) | PtychoError::Data(_) => {
            code::DATA
        }
        PtychoError::Json(_) => code::DATA,
        PtychoError::Divergence { .. } | PtychoError::Degenerate(_) => code::DIVERGENCE,
        PtychoError::OverlapViolation { .. } => code::OVERLAP,
        PtychoError::Io(_) => code::IO,
    }
}

impl From<PtychoError> for Failure {
    fn from(err: PtychoError) -> Self {
        Self::new(exit_code(&err), err.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Self::new(code::IO, err.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;
