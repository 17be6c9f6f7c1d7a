//! File plumbing shared by the subcommands: atomic writes, corpus reading,
//! and the worker-thread cap.

use std::fs;
use std::path::{Path, PathBuf};

use mmt_core::{Error, Result};

/// The temporary sibling a write lands in before the rename.
pub fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Moves a finished temporary into place.
pub fn commit(tmp: &Path, path: &Path) -> Result<()> {
    fs::rename(tmp, path).map_err(|e| Error::io(path.display(), e))
}

/// Writes `bytes` to `path` via a temporary sibling and a rename, so an
/// interrupted run never leaves a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_sibling(path);
    fs::write(&tmp, bytes).map_err(|e| Error::io(tmp.display(), e))?;
    commit(&tmp, path)
}

/// Reads a UTF-8 text file as lines, without trailing newlines.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// Applies the `MMT_THREADS` cap to the worker pool before any parallel
/// work runs.
pub fn cap_threads() -> std::result::Result<(), String> {
    let value = match std::env::var("MMT_THREADS") {
        Ok(v) => v,
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => return Err(format!("MMT_THREADS: {e}")),
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("MMT_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("could not size the worker pool: {e}"))
}
