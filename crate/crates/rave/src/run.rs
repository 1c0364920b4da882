//! `run.json`, the manifest written beside an edit's output frames.

use std::fs;
use std::path::{Path, PathBuf};

use rave_core::sampler::RunManifest;

use crate::error::{Error, Result};

pub const RUN_MANIFEST: &str = "run.json";

/// Writes `dir/run.json` and returns its path.
pub fn write_run(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let path = dir.join(RUN_MANIFEST);
    let text = serde_json::to_string_pretty(manifest).map_err(Error::json(&path))?;
    fs::write(&path, text + "\n").map_err(Error::io(&path))?;
    Ok(path)
}

/// Reads a manifest from a `run.json` path or a directory containing one.
pub fn read_run(path: &Path) -> Result<RunManifest> {
    let file = if path.is_dir() {
        path.join(RUN_MANIFEST)
    } else {
        path.to_path_buf()
    };
    if !file.exists() {
        return Err(Error::Missing(file));
    }
    let text = fs::read_to_string(&file).map_err(Error::io(&file))?;
    serde_json::from_str(&text).map_err(Error::json(&file))
}
