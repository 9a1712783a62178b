use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("chain load error at {element}: {msg}")]
    ChainLoad { element: String, msg: String },

    #[error("joint `{joint}` angle {angle} rad outside limits [{lo}, {hi}]")]
    JointLimit {
        joint: String,
        angle: f64,
        lo: f64,
        hi: f64,
    },

    #[error("expected {expected} joint angles, got {got}")]
    ConfigLength { expected: usize, got: usize },

    #[error("no valid pose found after {attempts} attempts ({accepted} accepted of {requested} requested)")]
    PoseSamplingExhausted {
        attempts: usize,
        accepted: usize,
        requested: usize,
    },

    #[error("target cloud is empty")]
    EmptyTarget,

    #[error("not enough points: need {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },

    #[error("registration diverged: only {0} gated correspondences")]
    Diverged(usize),

    #[error("registration failed: {0}")]
    Registration(String),

    #[error("rotation unobservable: {0}")]
    Unobservable(String),

    #[error("length mismatch: {0} flange poses vs {1} observations")]
    LengthMismatch(usize, usize),

    #[error("experiment aborted: {0}")]
    Aborted(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
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

    pub(crate) fn parse(path: impl AsRef<str>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().to_owned(),
            line,
            msg: msg.into(),
        }
    }
}
