use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid circle ({cx}, {cy}, r={r}): {reason}")]
    InvalidCircle {
        cx: f64,
        cy: f64,
        r: f64,
        reason: &'static str,
    },

    #[error("invalid frame {width}x{height}: dimensions must be finite and positive")]
    InvalidFrame { width: f64, height: f64 },

    #[error("circle center ({cx}, {cy}) lies outside frame {width}x{height}")]
    OutsideFrame {
        cx: f64,
        cy: f64,
        width: f64,
        height: f64,
    },

    #[error("score {0} outside (0, 1]")]
    InvalidScore(f64),

    #[error("detections from multiple images in one fusion call: `{expected}` and `{found}`")]
    MixedImages { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("synthetic placement infeasible: {0}; try fewer circles per image, smaller radii or a larger frame")]
    Infeasible(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
