//! Atomic experiment output writing with a digest manifest.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{io_err, CliError};

/// Write each (name, content) file atomically (temp file + rename) and
/// finish with a `MANIFEST` listing `<sha256-hex>  <name>` per file.
/// Returns the manifest entries in write order.
pub fn emit_outputs(
    files: &[(String, String)],
    dir: &Path,
) -> Result<Vec<(String, String)>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut entries = Vec::with_capacity(files.len());
    for (name, content) in files {
        write_atomic(&dir.join(name), content.as_bytes())?;
        entries.push((sha256_hex(content.as_bytes()), name.clone()));
    }
    let manifest: String = entries
        .iter()
        .map(|(digest, name)| format!("{digest}  {name}\n"))
        .collect();
    write_atomic(&dir.join("MANIFEST"), manifest.as_bytes())?;
    Ok(entries)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}
