use std::path::PathBuf;

/// Errors produced across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid label {label} at pixel ({row}, {col}); class count is {classes}")]
    InvalidLabel {
        row: usize,
        col: usize,
        label: usize,
        classes: usize,
    },
    #[error("{what}: value {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("wrong class volume mode: {0}")]
    Mode(String),
    #[error("class count mismatch: expected {expected}, found {found}")]
    ClassCount { expected: usize, found: usize },
    #[error("shape placement: {0}")]
    Placement(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss term `{term}` became non-finite ({value}) at step {step}")]
    NonFinite { term: &'static str, value: f64, step: u64 },
    #[error(
        "background image {path} is {width}x{height} but {need_width}x{need_height} is required; \
         resize or pad the file so both sides are at least that large"
    )]
    BackgroundTooSmall {
        path: PathBuf,
        width: usize,
        height: usize,
        need_width: usize,
        need_height: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("checkpoint blob `{blob}` failed its checksum")]
    Checksum { blob: String },
    #[error("missing asset: {0}")]
    MissingAsset(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("png {path}: {msg}")]
    Png { path: PathBuf, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
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
