use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus: no training pairs were generated")]
    EmptyCorpus,

    #[error("duplicate track_id {0:?} in music corpus")]
    DuplicateTrack(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("all query tokens are out of vocabulary: {0:?}")]
    AllTokensOov(Vec<String>),

    #[error("tokens not present in the embedding vocabulary: {0:?}")]
    OovTokens(Vec<String>),

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("pcm too short: {got} samples, need at least {need}")]
    PcmTooShort { got: usize, need: usize },

    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("unsupported wav: {0}")]
    UnsupportedWav(String),

    #[error("prototype pool for {supervision} supervision has {size} entries, need at least 2")]
    PoolTooSmall { supervision: &'static str, size: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("nDCG undefined: all relevance values are zero")]
    UndefinedNdcg,

    #[error("AUC undefined: labels contain a single class")]
    UndefinedAuc,

    #[error("zero-shot split has no unseen tags")]
    NoUnseenTags,

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav decode error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
