use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::fulltext::DropReason;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("{}: {source}", path.display())]
    IoAt { path: PathBuf, source: io::Error },

    #[error("gzip stream unreadable at compressed byte {offset}: {source}")]
    Gzip { offset: u64, source: io::Error },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(
        "unparseable timestamp {0:?}: expected legacy \"EEE MMM dd HH:mm:ss +ZZZZ yyyy\" or ISO-8601"
    )]
    Timestamp(String),

    #[error("unknown table {0:?}")]
    UnknownTable(String),

    #[error("warehouse at {0} is locked by another writer")]
    Locked(PathBuf),

    #[error("no committed manifest in {0}")]
    NoManifest(PathBuf),

    #[error("secondary index {0} missing; rebuild indexes first")]
    MissingIndex(&'static str),

    #[error("query term {term:?} is removed by the noise filter ({reason})")]
    FilteredTerm { term: String, reason: DropReason },

    #[error("no language profiles loaded")]
    NoProfiles,

    #[error("training corpus too small: {got} bytes, need at least {need}")]
    CorpusTooSmall { got: usize, need: usize },

    #[error("injected fault: {0}")]
    Injected(String),
}

impl Error {
    pub(crate) fn at(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::IoAt { path, source }
    }

    /// True for failures of the underlying file system rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::IoAt { .. } | Error::Gzip { .. } | Error::Locked(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
