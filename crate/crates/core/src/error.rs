use std::path::PathBuf;

/// Errors produced across the pose pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty index")]
    EmptyIndex,
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("symmetry spec incomplete: {0}")]
    IncompleteSymmetry(String),
    #[error("invalid symmetry group: {0}")]
    InvalidGroup(String),
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("degenerate bounding box along {axis:?}")]
    DegenerateBox { axis: [f64; 3] },
    #[error("no keypoint cluster")]
    NoKeypointCluster,
    #[error("underdetermined: need at least 2 keypoints, got {0}")]
    Underdetermined(usize),
    #[error("insufficient scores: need at least 2, got {0}")]
    InsufficientScores(usize),
    #[error("bin overfull: could not place instance {placed} after {attempts} attempts")]
    BinOverfull { placed: usize, attempts: usize },
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: byte {offset}: {message}")]
    ParseOffset {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: unsupported property `{property}`: {reason}")]
    UnsupportedProperty {
        path: PathBuf,
        property: String,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
