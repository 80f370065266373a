pub mod evaluate;
pub mod generate;
pub mod report;
pub mod rollout;
pub mod train;

use std::path::{Path, PathBuf};

use crate::Global;

pub fn threads(global: &Global) -> usize {
    global.threads.unwrap_or(1).max(1)
}

/// `data.mstm` gets `data.mstm.manifest.json` beside it.
pub fn sidecar_manifest(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
