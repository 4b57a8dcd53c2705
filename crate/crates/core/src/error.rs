use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum ReconError {
    /// Bad user input (empty clouds, samples outside the grid, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// Parameters that cannot be honoured (levels, thresholds, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A point-cloud or mesh file could not be parsed.
    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// Some point has neither a normal nor a usable view direction.
    #[error("no usable orientation for point {index}: {reason}")]
    MissingOrientation { index: usize, reason: String },

    /// Every point was rejected during ingestion.
    #[error("no usable points in {0} ({1} rejected with zero-length orientation)")]
    NoSurvivingPoints(PathBuf, usize),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A pipeline stage failed; wraps the stage's own error.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<ReconError>,
    },
}

impl ReconError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ReconError::Io { path: path.into(), source }
    }

    /// Attach the name of the pipeline stage that produced this error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        ReconError::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, ReconError>;
