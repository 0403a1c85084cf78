use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("loss mask selects no positions")]
    EmptyMask,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("trainable parameter `{0}` has no gradient")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("sequence needs {needed} positions but the context holds {limit}")]
    ContextOverflow { needed: usize, limit: usize },

    #[error("characters outside the vocabulary: {0:?}")]
    OutOfVocabulary(Vec<char>),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("invalid stage config: {0}")]
    Stage(String),

    #[error("LoRA adapter already attached to `{0}`")]
    LoraAlreadyAttached(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("sample `{id}`")]
    Sample {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("template placeholder `{{{0}}}` has no value")]
    UnfilledPlaceholder(String),

    #[error("length mismatch: {hyps} hypotheses vs {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// This error and its sources, joined with `: `.
    pub fn report(&self) -> String {
        let mut out = self.to_string();
        let mut cur = std::error::Error::source(self);
        while let Some(e) = cur {
            out.push_str(": ");
            out.push_str(&e.to_string());
            cur = e.source();
        }
        out
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
