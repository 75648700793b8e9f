use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the compilation toolkit.
#[derive(Debug, Error)]
pub enum GeoqcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("numeric failure at integration step {step}: {reason}")]
    IntegrationStep { step: usize, reason: String },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<GeoqcError>,
    },

    #[error("matrix is singular (pivot magnitude {0:e})")]
    Singular(f64),

    #[error("matrix is not unitary: |U^dag U - I|_F = {deviation:e} exceeds {tolerance:e}")]
    NotUnitary { deviation: f64, tolerance: f64 },

    #[error("file not found: {0}")]
    NotFound(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
}

pub type Result<T, E = GeoqcError> = std::result::Result<T, E>;

impl GeoqcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            GeoqcError::NotFound(path)
        } else {
            GeoqcError::Io { path, source }
        }
    }

    /// True for errors caused by bad numbers rather than bad data or usage.
    pub fn is_numeric(&self) -> bool {
        match self {
            GeoqcError::Numeric(_)
            | GeoqcError::IntegrationStep { .. }
            | GeoqcError::Singular(_)
            | GeoqcError::Divergence { .. } => true,
            GeoqcError::Sample { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
