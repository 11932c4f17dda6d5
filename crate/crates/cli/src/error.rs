use std::process::ExitCode;

use thiserror::Error;
use volterra_core::VolterraError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<VolterraError> for CliError {
    fn from(e: VolterraError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_stable_codes() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::from(VolterraError::Io(io)).code(), 3);
        assert_eq!(
            CliError::from(VolterraError::AllRestartsFailed { restarts: 5 }).code(),
            4
        );
        assert_eq!(CliError::from(VolterraError::NotPositiveDefinite).code(), 4);
        assert_eq!(
            CliError::from(VolterraError::InvalidArgument("x".into())).code(),
            2
        );
    }
}
