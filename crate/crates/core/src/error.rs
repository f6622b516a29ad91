use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A malformed line in one of the line-oriented input formats.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl RecordError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Record {
        path: PathBuf,
        #[source]
        source: RecordError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),

    #[error("index file: {0}")]
    IndexFormat(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("backend returned HTTP {status}: {body}")]
    Protocol { status: u16, body: String },

    #[error("backend returned an empty generation")]
    EmptyGeneration,

    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    #[error("cache {path}: {message}")]
    Cache { path: PathBuf, message: String },

    #[error("paired differences have zero variance{}", if *.identical { " (identical runs)" } else { "" })]
    DegenerateVariance { identical: bool },

    #[error("runs cover different queries (missing from first: {missing_in_a:?}; missing from second: {missing_in_b:?})")]
    QuerySetMismatch {
        missing_in_a: Vec<String>,
        missing_in_b: Vec<String>,
    },

    #[error("query {query_id}: {source}")]
    Query {
        query_id: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Backend,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn record(path: impl Into<PathBuf>, source: RecordError) -> Self {
        Error::Record {
            path: path.into(),
            source,
        }
    }

    pub fn for_query(self, query_id: &str) -> Self {
        Error::Query {
            query_id: query_id.to_string(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) => ErrorKind::Config,
            Error::Record { .. }
            | Error::Io { .. }
            | Error::EmptyCorpus
            | Error::DuplicateDocId(_)
            | Error::IndexFormat(_)
            | Error::DegenerateVariance { .. }
            | Error::QuerySetMismatch { .. } => ErrorKind::Data,
            Error::Transport { .. }
            | Error::Protocol { .. }
            | Error::EmptyGeneration
            | Error::MalformedResponse(_)
            | Error::Cache { .. } => ErrorKind::Backend,
            Error::Query { source, .. } => source.kind(),
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
