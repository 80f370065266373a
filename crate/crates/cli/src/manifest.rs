//! Run manifests: what produced a set of artifacts.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};
use serde::Serialize;

use crate::io::{hash_file, write_atomic};
use crate::Global;

#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct Artifact {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize, Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub dataset_hash: Option<String>,
    pub checkpoint_id: Option<String>,
    pub wall_time_s: f64,
    pub artifacts: Vec<Artifact>,
}

/// Collects artifacts while a command runs.
pub struct Recorder {
    manifest: Manifest,
    started: Instant,
    record_time: bool,
}

impl Recorder {
    pub fn new(command: &str, global: &Global, config_hash: Option<String>) -> Self {
        Self {
            manifest: Manifest {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                seed: global.seed,
                config_hash,
                dataset_hash: None,
                checkpoint_id: None,
                wall_time_s: 0.0,
                artifacts: Vec::new(),
            },
            started: Instant::now(),
            record_time: !global.no_clock,
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn dataset(&mut self, path: &Path) -> Result<()> {
        self.manifest.dataset_hash = Some(hash_file(path)?);
        Ok(())
    }

    /// Checkpoints are identified by the hash of their bytes.
    pub fn checkpoint(&mut self, path: &Path) -> Result<()> {
        self.manifest.checkpoint_id = Some(hash_file(path)?);
        Ok(())
    }

    /// Registers a written file; `base` is the manifest's directory.
    pub fn artifact(&mut self, base: &Path, path: &Path) -> Result<()> {
        if !path.is_file() {
            bail!("declared output {} was not written", path.display());
        }
        let rel = path.strip_prefix(base).unwrap_or(path);
        self.manifest.artifacts.push(Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: hash_file(path)?,
        });
        Ok(())
    }

    pub fn record_time(&self) -> bool {
        self.record_time
    }

    pub fn finish(mut self, path: &Path) -> Result<Manifest> {
        if self.record_time {
            self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        }
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        Ok(self.manifest)
    }
}
