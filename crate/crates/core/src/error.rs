use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid document: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("feature {index}: missing property `{key}`")]
    MissingProperty { index: usize, key: String },

    #[error("feature {index}: {message}")]
    InvalidFeature { index: usize, message: String },

    #[error("duplicate unit id `{0}`")]
    DuplicateId(String),

    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("ring is not closed (first point differs from last)")]
    OpenRing,

    #[error("ring has {0} points, at least 4 are required")]
    ShortRing(usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown unit id `{0}`")]
    UnknownUnit(String),

    #[error("district {0} has no units")]
    EmptyDistrict(usize),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("post office `{office}` is hosted by unit {unit}, which the plan does not assign")]
    UnassignedHost { office: String, unit: String },

    #[error("perimeter must be positive")]
    ZeroPerimeter,

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("persistence diagram has no finite pairs")]
    NoFinitePairs,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("initial plan is not admissible: {0}")]
    Inadmissible(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
