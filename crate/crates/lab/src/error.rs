use std::path::PathBuf;

/// Failures of a run, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// The configuration could not be read or parsed.
    #[error("config: {0}")]
    Config(String),

    /// A parameter or geometry was rejected before or during a run.
    #[error("validation: {0}")]
    Validation(String),

    /// A solver or fit broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Validation(_) | LabError::Io { .. } => EXIT_VALIDATION,
            LabError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<uhs_core::Error> for LabError {
    fn from(e: uhs_core::Error) -> Self {
        use uhs_core::Error as E;
        match e {
            E::NonFinite(_)
            | E::WeightOverflow { .. }
            | E::SolverDiverged { .. }
            | E::SingularMatrix(_)
            | E::DegenerateFit(_) => LabError::Numerical(e.to_string()),
            _ => LabError::Validation(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
