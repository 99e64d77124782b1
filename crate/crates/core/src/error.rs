use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid class split: {0}")]
    InvalidSplit(String),

    #[error("class {0} has no training samples")]
    EmptyClass(usize),

    #[error("no prototype row for class {0}")]
    MissingPrototype(usize),

    #[error("prototype bank required by the objective but not set")]
    MissingPrototypeBank,

    #[error("linear-probed head snapshot required but not set")]
    MissingHeadSnapshot,

    #[error("attempt to mutate frozen parameters ({0})")]
    FrozenMutation(&'static str),

    #[error("target-domain data reached a training path ({0})")]
    TargetLeak(&'static str),

    #[error("singular or ill-conditioned transform (condition number {0:.3e})")]
    SingularTransform(f64),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for usage and input problems, 3 for numerical
    /// failures, 4 for format or version mismatches.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) | Error::Diverged { .. } | Error::SingularTransform(_) | Error::Undefined(_) => 3,
            Error::Format(_) | Error::Version { .. } => 4,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
