use thiserror::Error;

/// Exit code for bad input: unparsable data or config, unknown names.
pub const EXIT_INPUT: u8 = 2;
/// Exit code for numerical solver failures.
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),

    #[error("{}: {}", .0.module(), .0)]
    Core(#[from] boro_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_solver_error() => EXIT_SOLVER,
            _ => EXIT_INPUT,
        }
    }
}
