use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the decomposition pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("empty mesh")]
    EmptyMesh,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported mesh format for {0} (expected .obj or .off)")]
    UnsupportedFormat(PathBuf),

    #[error("grid resolution {0} outside [8, 512]")]
    ResolutionOutOfRange(usize),

    #[error("level set is empty at the requested iso value")]
    EmptySurface,

    #[error("level set reaches the boundary of the sampling grid")]
    OpenLevelSet,

    #[error("offset {epsilon} does not fit inside the grid padding")]
    CagePadding { epsilon: f64 },

    #[error("degenerate convex hull: {0}")]
    DegenerateHull(String),

    #[error("cutting plane leaves one side empty")]
    EmptySide,

    #[error("degenerate cut: {0}")]
    DegenerateCut(String),

    #[error("no candidate plane cuts any visibility edge")]
    NoUsefulPlane,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error originates from the file system.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
