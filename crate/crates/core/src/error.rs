use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the augmentation pipeline, the simulator and the file formats.
#[derive(Debug, Error)]
pub enum CmagError {
    #[error("cooperative group has {0} agent(s); at least 2 are required")]
    GroupTooSmall(usize),
    #[error("split centers coincide (distance {0:e} m)")]
    DegenerateCenters(f64),
    #[error("invalid beam target {0}; must be >= 1")]
    BadTarget(usize),
    #[error("invalid range image geometry: {0}")]
    BadImage(String),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid count distribution: {0}")]
    BadDistribution(String),
    #[error("invalid agent pair ({0}, {1}) for a group of {2}")]
    InvalidPair(usize, usize, usize),
    #[error("occupancy grids do not share extent and cell size")]
    MismatchedGrids,
    #[error("placement failed after {0} attempts")]
    PlacementFailure(usize),
    #[error("index {index} out of bounds for {len} placement(s)")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("invalid rigid transform: {0}")]
    BadTransform(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("group validation failed: {0}")]
    Invalid(#[from] crate::model::Violation),
    #[error("bad magic bytes in {0}")]
    BadMagic(PathBuf),
    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {reason}")]
    BadManifest { path: PathBuf, reason: String },
}

impl CmagError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CmagError::IoFailure {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            CmagError::IoFailure { .. } | CmagError::BadMagic(_) | CmagError::TruncatedFile { .. }
        )
    }
}

pub type Result<T, E = CmagError> = std::result::Result<T, E>;
