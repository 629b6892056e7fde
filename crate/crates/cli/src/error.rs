use std::path::PathBuf;

use pdasgd_core::OtError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad IDX magic number {found:#010x}, expected 0x00000803")]
    BadMagic { found: u32 },

    #[error("truncated input: {what} needs {expected} bytes but only {found} remain (missing {missing})", missing = expected - found)]
    Truncated {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("image dimensions {count} x {rows} x {cols} overflow the address space")]
    DimensionOverflow {
        count: usize,
        rows: usize,
        cols: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid image: {0}")]
    Image(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Ot(#[from] OtError),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
