//! Run manifests: configuration hash, per-file accounting and output digests.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Loaded;
use crate::source::FileReport;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub command: &'static str,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileReport>,
    pub counts: BTreeMap<&'static str, u64>,
    /// Output file → SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &'static str, loaded: &Loaded, inputs: Vec<FileReport>) -> Self {
        let mut counts = BTreeMap::new();
        counts.insert("files", inputs.len() as u64);
        counts.insert("failed_files", inputs.iter().filter(|r| r.failed()).count() as u64);
        counts.insert("flows", inputs.iter().map(|r| r.flows).sum());
        Manifest {
            tool: format!("flowfeat {}", env!("CARGO_PKG_VERSION")),
            command,
            config_hash: loaded.hash(),
            config: loaded.canonical(),
            inputs,
            counts,
            outputs: BTreeMap::new(),
        }
    }

    pub fn partial(&self) -> bool {
        self.inputs.iter().any(FileReport::failed)
    }

    /// Writes `bytes` to `dir/name` and records its digest.
    pub fn write_output(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        let path = dir.join("manifest.json");
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
