use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate camera pose: {0}")]
    DegeneratePose(String),

    #[error("singular transform (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("invalid disparity {0} (must be > 0)")]
    InvalidDisparity(f64),

    #[error("camera inside volume: distance {distance} <= bounding radius {radius}")]
    CameraInsideVolume { distance: f64, radius: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("volume loss weight is {0} but no ground-truth volume was supplied")]
    MissingSupervision(f64),

    #[error("loss became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("rig line {line}: {message}")]
    Rig { line: usize, message: String },

    #[error("malformed {format} data: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(format: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            format,
            message: msg.into(),
        }
    }
}
