use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated IDX payload: header promises {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite update in {0}")]
    NonFiniteUpdate(&'static str),

    #[error("not a HAMNET1 model file")]
    BadModelMagic,

    #[error("unsupported model format version {0}")]
    VersionMismatch(String),

    #[error("model file truncated: {0}")]
    TruncatedFile(String),

    #[error("malformed model metadata: {0}")]
    Metadata(String),

    #[error("hidden size {0} is odd; the stochastic encoder needs 2*K_latent == M")]
    OddHiddenSize(usize),

    #[error("empty evaluation data")]
    EmptyData,

    #[error("synaptic capacity undefined: no nonsilent synapses")]
    ZeroSynapses,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
