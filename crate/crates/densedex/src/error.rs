use std::io;
use std::path::{Path, PathBuf};

use densedex_core::params_format::ParamsFormatError;
use densedex_core::store_format::StoreFormatError;
use densedex_core::{EncodeError, EvalError, FusionError, MipsError, RunError, TrainError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Store { path: PathBuf, source: StoreFormatError },
    #[error("{}: {source}", path.display())]
    Params { path: PathBuf, source: ParamsFormatError },
    #[error(transparent)]
    Mips(#[from] MipsError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{0}")]
    Usage(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Self::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn parse(path: impl AsRef<Path>, line: usize, message: impl Into<String>) -> Self {
        Self::Parse { path: path.as_ref().to_path_buf(), line, message: message.into() }
    }

    /// Process exit code: 1 usage, 2 data or format, 3 internal invariant.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Invariant(_) => 3,
            _ => 2,
        }
    }
}
