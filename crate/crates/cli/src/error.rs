use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, manifest or configuration.
    #[error("usage error: {0}")]
    Usage(String),
    /// A computation failed or a checked property did not hold.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<capaboost::Error> for CliError {
    fn from(e: capaboost::Error) -> Self {
        match e {
            capaboost::Error::Config(_) | capaboost::Error::Shape { .. } => CliError::Usage(e.to_string()),
            capaboost::Error::Numeric(_) | capaboost::Error::Contract(_) => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}
