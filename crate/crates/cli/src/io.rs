//! Paths, config loading and atomic writes.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mstm_core::config::KeyValues;
use sha2::{Digest, Sha256};

use crate::Global;

/// Resolves an output path against the output root when it is relative.
pub fn output_path(global: &Global, path: &Path) -> PathBuf {
    match &global.output_root {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_path_buf(),
    }
}

/// Loaded configuration and the hash of its bytes.
pub fn load_config(global: &Global) -> Result<(KeyValues, Option<String>)> {
    match &global.config {
        Some(path) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
            let text = String::from_utf8(bytes.clone()).context("config is not valid UTF-8")?;
            let kv = KeyValues::parse(&text).with_context(|| format!("parsing config {}", path.display()))?;
            Ok((kv, Some(sha256_hex(&bytes))))
        }
        None => Ok((KeyValues::default(), None)),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
