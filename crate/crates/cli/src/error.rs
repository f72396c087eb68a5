use fecap_core::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("simulation error: {0}")]
    Simulation(SimError),

    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Validation(_) => 2,
            CliError::Simulation(SimError::InvalidParameter { .. }) => 2,
            CliError::Simulation(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        CliError::Simulation(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Io(err.to_string())
    }
}
