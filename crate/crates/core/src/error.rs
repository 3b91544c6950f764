use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("requested an empty set: {0}")]
    EmptySet(&'static str),
    #[error("could not place a distinct object after {attempts} attempts")]
    DuplicateObjects { attempts: usize },
    #[error("template {template_id} does not realize a {kind} question")]
    KindMismatch { template_id: usize, kind: &'static str },
    #[error("unknown template id {0}")]
    UnknownTemplate(usize),
    #[error("vocabulary has no entries")]
    EmptyVocabulary,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("candidate has no tokens")]
    EmptyCandidate,
    #[error("no generated dialogue for game ids {0:?}")]
    Alignment(Vec<u64>),
    #[error("generated dialogue for game {game_id} does not follow the {mode} length policy")]
    LengthPolicy { game_id: u64, mode: &'static str },
    #[error("scene {0} referenced by a dialogue is missing")]
    MissingScene(u64),
    #[error("non-finite loss in batch {batch} of epoch {epoch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory {0} is locked by another experiment")]
    Locked(PathBuf),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad user input (configuration, files, flags)
    /// rather than by a failure while running a stage.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::Locked(_)
            | Error::Checkpoint(_)
            | Error::EmptySet(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
