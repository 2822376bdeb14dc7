use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("unrecognized format: expected magic {expected:?}, found {found:?}")]
    UnrecognizedFormat { expected: String, found: String },

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("shape overflow: {0}")]
    ShapeOverflow(String),

    #[error("solver blow-up at step {step}, stage {stage}: max |value| = {max_abs:e}")]
    BlowUp {
        step: usize,
        stage: usize,
        max_abs: f64,
    },

    #[error("rollout blow-up at step {step}: max |value| = {max_abs:e}")]
    RolloutBlowUp { step: usize, max_abs: f64 },

    #[error("tensor belongs to tape {found}, expected tape {expected}")]
    CrossTape { expected: u64, found: u64 },

    #[error("backward already ran on this tape; call reset_grads first")]
    BackwardTwice,

    #[error("loss must be a scalar, got {0} entries")]
    NonScalarLoss(usize),

    #[error("time misalignment: {0}")]
    TimeMisalignment(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("training diverged after {epochs} epochs")]
    Diverged { epochs: usize },

    #[error("uninterpretable layers: {}", .0.join(", "))]
    Uninterpretable(Vec<String>),

    #[error("unknown symbol {0}")]
    UnknownSymbol(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
