//! Write-once output files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

/// Fails before anything is written if any target exists and `force` is
/// off, so a refused run leaves no partial output.
pub fn check_writable(paths: &[PathBuf], force: bool) -> anyhow::Result<()> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            bail!("{} already exists; pass --force to overwrite", p.display());
        }
    }
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_file(path: &Path, bytes: &[u8], force: bool) -> anyhow::Result<()> {
    check_writable(&[path.to_path_buf()], force)?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Keeps ids usable as file name components.
pub fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
