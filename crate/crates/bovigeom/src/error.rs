use std::fmt::Display;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures mapped onto the process exit codes: configuration problems exit
/// with 1, bad input data with 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("{}: {msg}", path.display())]
    Data { path: PathBuf, msg: String },
}

impl Error {
    pub fn config(msg: impl Display) -> Self {
        Error::Config(msg.to_string())
    }

    pub fn data(path: impl AsRef<Path>, msg: impl Display) -> Self {
        Error::Data { path: path.as_ref().to_path_buf(), msg: msg.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data { .. } => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::data(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::data(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    crate::io::write_all(path, bytes).map_err(|e| Error::data(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::data(path, e))
}
