//! Artifact writing. Files appear complete or not at all.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Writes `contents` to `path` through a temporary file in the same directory
/// followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes a set of `(relative path, contents)` artifacts under `root`. Either
/// every file is written or, on failure, the ones already written are removed.
pub fn write_bundle(root: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = root.join(name);
        if let Err(e) = write_atomic(&path, contents) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(())
}
