//! Error wrapper mapping failures onto the process exit codes:
//! 0 success, 2 configuration error, 3 data error, 4 numeric failure.

use std::fmt;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug)]
pub enum CliError {
    /// The run could not even be described: bad flags, unreadable or invalid
    /// configuration.
    Config(String),
    /// Anything the library reports; grouped into config, numeric, and data
    /// families by the library's own classification.
    Lib(heatcast::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(e) if e.is_config() => 2,
            CliError::Lib(e) if e.is_numeric() => 4,
            CliError::Lib(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<heatcast::Error> for CliError {
    fn from(e: heatcast::Error) -> Self {
        CliError::Lib(e)
    }
}
