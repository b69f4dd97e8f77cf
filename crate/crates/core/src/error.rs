use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),
    #[error("PLY schema error: missing or invalid property `{0}`")]
    Schema(String),
    #[error("PLY data error at element {index}: {message}")]
    Data { index: usize, message: String },
    #[error("malformed PLY header: {0}")]
    Header(String),
    #[error("empty cloud")]
    EmptyCloud,
    #[error("index {index} out of range for cloud of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("gaussian is not visible: camera-space depth {depth} <= near plane")]
    NotVisible { depth: f64 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {actual_w}x{actual_h}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no anchor within {epsilon} px of prompt ({x}, {y})")]
    NoAnchor { x: f64, y: f64, epsilon: f64 },
    #[error("mask provider failed for view {view}: {reason}")]
    Provider { view: u32, reason: String },
    #[error("only {usable} usable views, at least 2 are required")]
    TooFewViews { usable: usize },
    #[error("unknown object id {0}")]
    UnknownObject(u16),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
