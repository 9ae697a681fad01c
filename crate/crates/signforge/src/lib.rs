//! File formats, configuration and the staged pipeline around `signforge-core`.

use std::path::Path;

pub mod annotations;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fixture;
pub mod imageio;
pub mod manifest;
pub mod pipeline;
pub mod searchlog;

pub use error::{Error, Result};

/// Writes `text` to `path`, creating parent directories.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    std::fs::write(path, text).map_err(Error::io(path))
}
