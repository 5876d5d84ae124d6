use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("check failed: {0}")]
    Check(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] expfam_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        use expfam_core::Error as E;
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Check(_) => ExitCode::from(3),
            CliError::Core(
                E::Config(_) | E::Json(_) | E::Parse(_) | E::InvalidModel(_) | E::InvalidFamily(_) | E::InvalidFactor(_),
            ) => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
