use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] signforge_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: expected format `{expected}`, found `{found}`")]
    Version { path: PathBuf, expected: String, found: String },

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` needs {artifact}, which does not exist; run the producing stage first")]
    Prerequisite { stage: String, artifact: PathBuf },

    #[error("stage `{stage}` already has outputs from a different configuration in {dir}; rerun with --force")]
    Stale { stage: String, dir: PathBuf },

    #[error("{0} is locked by another run; remove the lock file if that run is gone")]
    Locked(PathBuf),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Error {
        Error::Parse { path: path.into(), line, message: message.into() }
    }

    /// Process exit status: 2 configuration, 3 missing prerequisite,
    /// 4 numerical divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use signforge_core::Error as C;
        match self {
            Error::Config(_) | Error::Stale { .. } => 2,
            Error::Core(C::Config(_) | C::InvalidRatio(_) | C::OutOfRange { .. } | C::InvalidPolicy(_)) => 2,
            Error::Prerequisite { .. } => 3,
            Error::Core(C::Diverged { .. }) => 4,
            _ => 1,
        }
    }
}
