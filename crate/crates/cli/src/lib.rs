//! Command-line front end for `conformal-core`: key=value configuration,
//! EFLD field files, JSON run manifests and the exit-code contract.

pub mod commands;
pub mod config;
pub mod field_io;
pub mod manifest;

use std::fmt;
use std::path::Path;

use conformal_core::Error;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    VerdictFail = 2,
    NoConvergence = 3,
    InvalidInput = 4,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn label(self) -> &'static str {
        match self {
            Exit::Success => "success",
            Exit::VerdictFail => "verdict-fail",
            Exit::NoConvergence => "no-convergence",
            Exit::InvalidInput => "invalid-input",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
    /// Solver error behind this failure, kept for the manifest.
    pub source: Option<Error>,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            exit: Exit::InvalidInput,
            message: message.into(),
            source: None,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::input(format!("{}: {err}", path.display()))
    }

    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Exit status for a solver error.
pub fn classify(err: &Error) -> Exit {
    match err {
        Error::Inner { source, .. } => classify(source),
        Error::GatesFailed(_)
        | Error::NoSupersolution(_)
        | Error::NonCoercive { .. }
        | Error::PotentialVanishes => Exit::VerdictFail,
        Error::InvalidInput(_)
        | Error::GridMismatch
        | Error::IndefiniteNorm
        | Error::NegativePotential { .. }
        | Error::NotCmc { .. }
        | Error::NonpositiveManufactured { .. }
        | Error::NoPositiveRoot => Exit::InvalidInput,
        _ => Exit::NoConvergence,
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        CliError {
            exit: classify(&err),
            message: err.to_string(),
            source: Some(err),
        }
    }
}
