//! Output files are staged next to their destination and renamed into
//! place, so each one is either complete or absent.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let dest = dir.join(name);
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("staging {}", dest.display()))?;
    tmp.write_all(contents)
        .and_then(|_| tmp.as_file().sync_all())
        .with_context(|| format!("writing {}", dest.display()))?;
    tmp.persist(&dest)
        .with_context(|| format!("renaming into {}", dest.display()))?;
    Ok(())
}

/// Creates `dir` if needed and writes every `(name, contents)` pair.
pub fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    for (name, contents) in files {
        write_atomic(dir, name, contents.as_bytes())?;
    }
    Ok(())
}
