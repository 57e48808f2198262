use std::fmt;
use std::path::Path;

/// Exit code for an analytic failure: infeasible or unknown solve, failed check or verdict.
pub const EXIT_FAILURE: i32 = 1;
/// Exit code for usage, parse and validation errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid input, unwritable output.
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<roa_core::ModelError> for CliError {
    fn from(e: roa_core::ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<roa_core::SosError> for CliError {
    fn from(e: roa_core::SosError) -> Self {
        CliError::Usage(e.to_string())
    }
}
