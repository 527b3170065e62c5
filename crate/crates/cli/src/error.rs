use hbf_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Domain(_) | CoreError::Dimension(_) | CoreError::Contract(_) => {
                CliError::Config(e.to_string())
            }
            CoreError::Degenerate(_)
            | CoreError::Infeasible { .. }
            | CoreError::Numerical(_)
            | CoreError::Autodiff(_) => CliError::Numerical(e.to_string()),
            CoreError::Io(_) | CoreError::Format { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
