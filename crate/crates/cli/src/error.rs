use std::path::Path;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failures of a command, grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    pub(crate) fn config_io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{}: {err}", path.display()))
    }

    pub(crate) fn data_io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

/// Classifies a core error raised while running a pipeline.
impl From<splitfit_core::Error> for CliError {
    fn from(err: splitfit_core::Error) -> Self {
        use splitfit_core::Error as E;
        let msg = err.to_string();
        match err {
            E::SolverFailure { .. } | E::DegenerateSimplex { .. } | E::AllNodesFailed | E::Linalg(_) => {
                CliError::Solver(msg)
            }
            E::InvalidSchedule(_) | E::ScheduleMismatch | E::NonFiniteResponse { .. } | E::DimensionMismatch { .. } => {
                CliError::Data(msg)
            }
            E::OutOfBounds { .. }
            | E::MissingBasis
            | E::InvalidSplit(_)
            | E::InvalidParameter(_)
            | E::InvalidGrid(_)
            | E::OutsideSampledRange { .. }
            | E::InvalidSimplex(_) => CliError::Config(msg),
        }
    }
}
