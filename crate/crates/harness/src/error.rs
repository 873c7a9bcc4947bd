use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error(transparent)]
    Core(#[from] glideflow::Error),

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("serialising report: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure stems from bad input rather than the solvers.
    pub fn is_validation(&self) -> bool {
        use glideflow::Error as E;
        match self {
            HarnessError::Parse { .. } | HarnessError::Invalid { .. } => true,
            HarnessError::Core(e) => !matches!(
                e.root(),
                E::SingularProximity { .. } | E::StepTooLarge { .. } | E::CombinatorialBlowup { .. }
            ),
            _ => false,
        }
    }

    /// Whether a solver stopped on the singular set.
    pub fn is_halt(&self) -> bool {
        matches!(self, HarnessError::Core(e) if matches!(e.root(), glideflow::Error::SingularProximity { .. }))
    }
}
