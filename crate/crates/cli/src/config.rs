//! Pipeline configuration: a TOML file plus `key.path=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use flowfeat::flow::FlowConfig;
use flowfeat::plugins::PluginSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Tokens of the capture file name, resolved by a naming scheme.
    #[default]
    Filename,
    /// One label per directory below `root`.
    Directory,
    None,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    pub mode: LabelMode,
    /// Naming scheme file; the built-in ISCX scheme when absent.
    pub scheme: Option<PathBuf>,
    /// Dataset root for directory labeling.
    pub root: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Label dimensions to report on; every known dimension when empty.
    pub group_by: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Capture files, directories (searched recursively) or glob patterns.
    pub inputs: Vec<String>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub parallelism: usize,
    pub asn_db: Option<PathBuf>,
    #[serde(default)]
    pub labeling: LabelingConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub plugins: Vec<PluginSpec>,
}

/// A loaded configuration and the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    pub base: PathBuf,
}

impl Loaded {
    /// Reads `path` and applies `overrides` (each `dotted.key=value`).
    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Loaded> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Loaded::from_str(&text, base, overrides).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn from_str(text: &str, base: PathBuf, overrides: &[String]) -> Result<Loaded> {
        let mut doc: Value = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: PipelineConfig = doc.try_into()?;
        Ok(Loaded { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// `p` relative to the config directory when it lies below it.
    pub fn display(&self, p: &Path) -> String {
        p.strip_prefix(&self.base)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    /// Checks that referenced files exist and plugins are well formed.
    pub fn validate(&self, need_plugins: bool) -> Result<()> {
        let c = &self.config;
        if need_plugins && c.plugins.is_empty() {
            bail!("at least one plugin is required");
        }
        for (what, path) in [("naming scheme", &c.labeling.scheme), ("ASN database", &c.asn_db)] {
            if let Some(p) = path {
                let p = self.resolve(p);
                if !p.is_file() {
                    bail!("{what} {} does not exist", p.display());
                }
            }
        }
        if c.labeling.mode == LabelMode::Directory {
            let root = c
                .labeling
                .root
                .as_ref()
                .ok_or_else(|| anyhow!("directory labeling needs labeling.root"))?;
            if !self.resolve(root).is_dir() {
                bail!("labeling root {} is not a directory", self.resolve(root).display());
            }
        }
        if c.flow.idle_timeout <= 0.0
            || c.flow.active_timeout <= 0.0
            || c.flow.max_packets == 0
            || c.flow.max_flows == 0
        {
            bail!("flow timeouts and limits must be positive");
        }
        Ok(())
    }

    /// Canonical JSON of the configuration without the thread count.
    pub fn canonical(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.config).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("parallelism");
        }
        v
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().to_string().as_bytes()))
    }

    /// Sorted, de-duplicated capture files named by `inputs`. A literal path
    /// that does not exist is an error; a pattern may match nothing.
    pub fn input_files(&self) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        for entry in &self.config.inputs {
            let path = self.resolve(Path::new(entry));
            let text = path.to_string_lossy();
            if text.contains(['*', '?', '[']) {
                for hit in glob::glob(&text).with_context(|| format!("bad input pattern {entry:?}"))? {
                    let hit = hit?;
                    if hit.is_dir() {
                        walk(&hit, &mut files)?;
                    } else {
                        files.push(hit);
                    }
                }
            } else if path.is_dir() {
                walk(&path, &mut files)?;
            } else if path.exists() {
                files.push(path);
            } else {
                bail!("input {} does not exist", path.display());
            }
        }
        files.sort();
        files.dedup();
        Ok(files)
    }
}

fn is_capture(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pcap" | "pcapng" | "cap"))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))?;
    for e in entries {
        let p = e?.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else if is_capture(&p) {
            out.push(p);
        }
    }
    Ok(())
}

/// Parses `value` as a TOML literal, falling back to a bare string.
fn parse_value(value: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()))
}

/// Sets `a.b.0.c=value` in `doc`, creating missing tables. Numeric segments
/// index existing arrays.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override {assignment:?} is not key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} is malformed");
    }
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), parse_value(value.trim()));
                    return Ok(());
                }
                t.entry(part.to_string())
                    .or_insert_with(|| Value::Table(Default::default()))
            }
            Value::Array(a) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| anyhow!("override {key:?}: {part:?} is not an index"))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| anyhow!("override {key:?}: index {idx} out of range ({len} entries)"))?;
                if last {
                    *slot = parse_value(value.trim());
                    return Ok(());
                }
                slot
            }
            _ => bail!("override {key:?}: {part:?} is not inside a table"),
        };
    }
    unreachable!("loop returns on the last segment")
}
