use std::path::PathBuf;

/// Errors raised anywhere in the training stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("token id {0} is out of range for a vocabulary of {1} tokens")]
    TokenOutOfRange(usize, usize),
    #[error("malformed statement at index {index}: {text:?}")]
    MalformedStatement { index: usize, text: String },
    #[error("scene is underdetermined: {0}")]
    Underdetermined(String),
    #[error("scene is inconsistent: {0}")]
    Inconsistent(String),
    #[error("scene generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("question synthesis failed: {0}")]
    Synthesis(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate reward group: all {0} rewards are equal")]
    DegenerateGroup(usize),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error("malformed corpus record at line {line}: {reason}")]
    Corpus { line: usize, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing prerequisite: {stage} output not found at {path}")]
    MissingPrerequisite { stage: String, path: PathBuf },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
