use std::process::ExitCode;

use thiserror::Error;

/// Failures grouped by exit status: 2 for configuration, 3 for simulation, 4 for I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("simulation error: {0}")]
    Simulation(lrt_core::Error),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Io(_) => 4,
        })
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<lrt_core::Error> for CliError {
    fn from(e: lrt_core::Error) -> Self {
        use lrt_core::Error as E;
        match e {
            E::Config(msg) => CliError::Config(msg),
            E::Io(err) => CliError::Io(err.to_string()),
            E::Csv(err) => CliError::Io(err.to_string()),
            other => CliError::Simulation(other),
        }
    }
}
