use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use tempfile::NamedTempFile;

/// Fails naming the first input that is not a readable file.
pub fn require_inputs(paths: &[&Path]) -> Result<()> {
    for path in paths {
        if !path.is_file() {
            bail!("input file not found: {}", path.display());
        }
    }
    Ok(())
}

/// Fails naming the first output whose directory does not exist.
pub fn require_outputs(paths: &[&Path]) -> Result<()> {
    for path in paths {
        let dir = parent_dir(path);
        if !dir.is_dir() {
            bail!("output directory does not exist: {}", dir.display());
        }
        if path.is_dir() {
            bail!("output path is a directory: {}", path.display());
        }
    }
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = NamedTempFile::new_in(parent_dir(path))
        .with_context(|| format!("cannot create temporary file next to {}", path.display()))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|()| tmp.as_file().sync_all())
        .with_context(|| format!("cannot write {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("cannot replace {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}
