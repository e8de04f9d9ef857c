use std::path::PathBuf;

use thiserror::Error;

use crate::embeddings::EmbedError;
use crate::llm::LlmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate embedding: zero-norm vector")]
    ZeroNorm,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error(transparent)]
    Embed(#[from] EmbedError),

    #[error(transparent)]
    Llm(#[from] LlmError),

    #[error("entity extraction failed for chunk {chunk_id}: {source}")]
    Extraction { chunk_id: String, source: LlmError },

    #[error("extraction failed for all {failed} chunks; first failure: {first}")]
    AllExtractionsFailed { failed: usize, first: Box<Error> },

    #[error("summarization failed for community {community_id}: {source}")]
    Summarize {
        community_id: String,
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in a model provider.
    pub fn is_provider(&self) -> bool {
        match self {
            Error::Embed(_) | Error::Llm(_) | Error::Extraction { .. } => true,
            Error::AllExtractionsFailed { first, .. } => first.is_provider(),
            Error::Summarize { source, .. } => source.is_provider(),
            _ => false,
        }
    }
}
