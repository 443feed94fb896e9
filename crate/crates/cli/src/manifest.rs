//! Run manifests: everything needed to reproduce a run byte-for-byte.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Written next to every command's outputs. Re-running the same command
/// with the embedded resolved configuration reproduces the data files
/// exactly; only `duration_seconds` is allowed to differ.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    /// Fully resolved configuration with all defaults materialized.
    pub config: Value,
    /// Paths of the data files this run produced.
    pub outputs: Vec<PathBuf>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            jobs: None,
            config,
            outputs: Vec::new(),
            duration_seconds: 0.0,
        }
    }

    pub fn finish(mut self, outputs: Vec<PathBuf>, elapsed: Duration, dir: &Path) -> anyhow::Result<()> {
        self.outputs = outputs;
        self.duration_seconds = elapsed.as_secs_f64();
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self).context("serialize manifest")?;
        std::fs::write(&path, text).with_context(|| format!("write {}", path.display()))?;
        Ok(())
    }
}
