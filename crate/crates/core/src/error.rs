use std::path::PathBuf;

use thiserror::Error;

use crate::joints::JointId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no upper-body points")]
    NoUpperBodyPoints,
    #[error("leg-hoof excluded from center")]
    LegHoofInCenter,
    #[error("joint {0} is not an upper-body joint")]
    NotUpperBody(JointId),
    #[error("insufficient training labels: {usable} usable frames, need at least 3")]
    InsufficientLabels { usable: usize },
    #[error("covariance for {0} is not symmetric positive definite")]
    NotPositiveDefinite(JointId),
    #[error("constraint model is missing joint {0}")]
    MissingJoint(JointId),
    #[error("invalid constraint model: {0}")]
    InvalidModel(String),

    #[error("cmap format error: {0}")]
    Format(String),
    #[error("truncated cmap payload at byte offset {offset}: expected {expected} bytes in total")]
    Truncated { offset: usize, expected: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("pgm format error: {0}")]
    Pgm(String),

    #[error("degenerate body")]
    DegenerateBody,
    #[error("skeleton is missing upper-body joint {0}")]
    IncompleteBody(JointId),
    #[error("track too short: {0} entries, need at least 2")]
    TrackTooShort(usize),
    #[error("frame {got} arrived after frame {last}; frames must be strictly increasing")]
    OutOfOrder { last: u64, got: u64 },
    #[error("median window must be odd and positive, got {0}")]
    BadWindow(usize),

    #[error("empty polyline")]
    EmptyPolyline,
    #[error("no truth frames")]
    NoTruthFrames,
    #[error("VCP undefined: no detected cows")]
    VcpUndefined,

    #[error("scene config error: {0}")]
    Config(String),

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

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
