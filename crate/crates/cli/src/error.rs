use thiserror::Error;

/// Command failure, mapped to the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration, flags or input files (exit 2).
    #[error("{0}")]
    Config(String),
    /// Solver did not succeed or a runtime/I/O failure (exit 1).
    #[error("{0}")]
    Solver(String),
    /// A self-check property failed (exit 3).
    #[error("{0}")]
    Property(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 1,
            CliError::Config(_) => 2,
            CliError::Property(_) => 3,
        }
    }
}

impl From<almdp::Error> for CliError {
    fn from(e: almdp::Error) -> Self {
        use almdp::Error as E;
        match e {
            E::Config(_) | E::Dimension { .. } | E::Dataset(_) | E::Csv(_) => CliError::Config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Solver(format!("I/O error: {e}"))
    }
}
