use std::fmt;
use std::process::ExitCode;

use evstu_core::ErrorCategory;

/// Exit codes. Usage errors (2) are produced by clap directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Input = 3,
    Config = 4,
    Service = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            exit: Exit::Input,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self {
            exit: Exit::Config,
            message: message.into(),
        }
    }

    pub fn code(&self) -> ExitCode {
        ExitCode::from(self.exit as u8)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<evstu_core::Error> for CliError {
    fn from(e: evstu_core::Error) -> Self {
        let exit = match e.category() {
            ErrorCategory::Input => Exit::Input,
            ErrorCategory::Config => Exit::Config,
            ErrorCategory::Service => Exit::Service,
        };
        Self {
            exit,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Anything that goes wrong while loading a config file is a config error,
/// even if the underlying cause is I/O or JSON syntax.
pub fn as_config(e: evstu_core::Error) -> CliError {
    CliError::config(e.to_string())
}
