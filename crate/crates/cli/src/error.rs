use nonlocal_core::{Error, ErrorClass};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Configuration => 2,
                ErrorClass::Numeric => 3,
                ErrorClass::StatisticalPower => 4,
            },
            CliError::Io(_) | CliError::Json(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "configuration",
            4 => "statistical_power",
            _ => "numeric",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(Error::Config(m) | Error::Numeric(m) | Error::StatisticalPower(m)) => {
                m.clone()
            }
            other => other.to_string(),
        }
    }

    /// `kind: message` on one line.
    pub fn log_line(&self) -> String {
        let msg = self.message().replace(['\n', '\r'], " ");
        format!("{}: {msg}", self.kind())
    }
}
