use std::process::ExitCode;

use thiserror::Error;
use xfnf_core::Error as CoreError;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        })
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidConfig(_)
            | CoreError::BudgetInfeasible { .. }
            | CoreError::UnknownTransform(_)
            | CoreError::UnknownPrimitive(_)
            | CoreError::AxisOutOfRange(_) => CliError::Config(msg),
            CoreError::NonFiniteLoss { .. } | CoreError::NonFinite { .. } => CliError::Numeric(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
