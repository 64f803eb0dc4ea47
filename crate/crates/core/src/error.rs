use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite coordinate at point {index}")]
    NonFinitePoint { index: usize },
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    // PLY
    #[error("malformed PLY header at line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("unsupported PLY encoding '{encoding}' at line {line}")]
    UnsupportedEncoding { line: usize, encoding: String },
    #[error("PLY vertex element lacks property '{property}' (header line {line})")]
    MissingCoordinateProperty { line: usize, property: String },
    #[error("truncated payload at offset {offset}: {reason}")]
    TruncatedPayload { offset: usize, reason: String },
    #[error("malformed value at line {line}: {reason}")]
    MalformedValue { line: usize, reason: String },

    // descriptor / weight files
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    // config
    #[error("unknown config key '{key}' at line {line}")]
    UnknownKey { line: usize, key: String },
    #[error("config invariant violated: {0}")]
    InvariantViolation(String),

    // keypoints
    #[error("keypoint index {index} out of range for cloud of {len} points")]
    KeypointOutOfRange { index: usize, len: usize },
    #[error("duplicate keypoint index {0}")]
    DuplicateKeypoint(usize),

    #[error("degenerate support: {0}")]
    DegenerateSupport(String),

    // network
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("stale activation cache: {0}")]
    StaleCache(String),

    // training
    #[error("insufficient overlap: {0}")]
    InsufficientOverlap(String),
    #[error("batch too small: {0} elements (need at least 2)")]
    BatchTooSmall(usize),
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("empty manifest")]
    EmptyManifest,

    // matching / registration
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("too few correspondences: {0} (need at least 3)")]
    TooFewCorrespondences(usize),
    #[error("RANSAC found no model with at least 3 inliers")]
    NoModelFound,
    #[error("empty cloud")]
    EmptyCloud,

    // evaluation
    #[error("empty correspondence set")]
    EmptyCorrespondences,
    #[error("no fragment pairs to evaluate")]
    NoPairs,
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("invalid synthetic scene config: {0}")]
    InvalidSceneConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
