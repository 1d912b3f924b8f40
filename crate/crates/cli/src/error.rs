use std::fmt;
use std::process::ExitCode;

use randmi::error::{Error as CoreError, SolveError};
use randmi::sequential::SequentialError;

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Ok = 0,
    Io = 1,
    Usage = 2,
    Schema = 3,
    Infeasible = 4,
    Numerical = 5,
}

impl From<Code> for ExitCode {
    fn from(c: Code) -> Self {
        ExitCode::from(c as u8)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: Code,
    pub message: String,
}

impl CliError {
    pub fn new(code: Code, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Code::Usage, message)
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new(Code::Io, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn code_of(e: &CoreError) -> Code {
    match e {
        CoreError::Parse(_) | CoreError::Eval(_) | CoreError::Model(_) | CoreError::Json(_) => Code::Schema,
        CoreError::Level(_) => Code::Usage,
        CoreError::Solve(SolveError::Model(_) | SolveError::TooLarge(_)) => Code::Schema,
        CoreError::Solve(SolveError::NotAffine(_) | SolveError::Numerical(_)) => Code::Numerical,
        CoreError::Io(_) | CoreError::Csv(_) => Code::Io,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        Self::new(code_of(&e), e.to_string())
    }
}

impl From<SequentialError> for CliError {
    fn from(e: SequentialError) -> Self {
        Self::new(code_of(&e.source), e.to_string())
    }
}

impl From<randmi::error::ModelError> for CliError {
    fn from(e: randmi::error::ModelError) -> Self {
        CoreError::from(e).into()
    }
}

impl From<randmi::error::LevelError> for CliError {
    fn from(e: randmi::error::LevelError) -> Self {
        CoreError::from(e).into()
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CoreError::from(e).into()
    }
}
