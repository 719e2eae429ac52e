use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NOT_CONVERGED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_SIZE_CAP: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] convbound_core::Error),

    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use convbound_core::Error as E;
        match self {
            CliError::Core(E::SizeCap { .. }) => EXIT_SIZE_CAP,
            CliError::Core(E::NotConverged { .. } | E::GradientNotConverged { .. }) => EXIT_NOT_CONVERGED,
            CliError::Core(_) | CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NOT_CONVERGED,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
