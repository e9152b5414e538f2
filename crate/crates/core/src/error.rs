use crate::lattice::LatticeError;

/// Crate-level error.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(#[from] crate::lattice::Violation),
    #[error(transparent)]
    Expert(#[from] crate::expert::ExpertError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
