use std::path::PathBuf;

use crate::models::PhaseState;
use crate::sections::SectionPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A configuration point outside the region where a model is defined.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("distance to the primary {r:e} is below the collision guard {guard:e}")]
    PrimaryCollision { r: f64, guard: f64 },
    #[error("distance to the perturber {r12:e} is below the collision guard {guard:e}")]
    PerturberCollision { r12: f64, guard: f64 },
    #[error("non-finite state component")]
    NonFinite,
    #[error("the toy model has no potential")]
    NoPotential,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),

    /// The trajectory left the model domain; `last_valid` is the last sample
    /// that was recorded.
    #[error("integration stopped at t = {}: {source}", last_valid.t)]
    Integration {
        source: DomainError,
        last_valid: PhaseState,
    },

    /// Section collection stopped early; `found` holds the crossings
    /// detected before the failure.
    #[error("section interrupted after {} crossings: {source}", found.len())]
    SectionInterrupted {
        found: Vec<SectionPoint>,
        source: Box<Error>,
    },

    #[error("spectrum requested for an invalid (guarded) stability sample at t = {t}")]
    InvalidSample { t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
