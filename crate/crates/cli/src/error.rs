use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flag, bad config file or out-of-range parameter.
    #[error("{0}")]
    Usage(String),
    /// Numerical or I/O failure while running.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<robust_kalman::Error> for CliError {
    fn from(e: robust_kalman::Error) -> Self {
        match e {
            robust_kalman::Error::InvalidParameter { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
