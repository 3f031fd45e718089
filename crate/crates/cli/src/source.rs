//! Input files: labels, flow assembly and per-file accounting.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use flowfeat::capture::{open_capture, CaptureError};
use flowfeat::flow::{assemble, BiFlow, FlowConfig};
use flowfeat::labeling::{labels_from_directory, labels_from_filename, LabelSet, NamingScheme};
use serde::Serialize;

use crate::config::{LabelMode, Loaded};

/// A capture file to process, with the labels every flow in it receives.
#[derive(Debug, Clone)]
pub struct Source {
    pub path: PathBuf,
    /// Path as written to outputs: relative to the config directory when possible.
    pub name: String,
    pub labels: LabelSet,
}

/// Input files and the ordered label dimensions seen across them.
#[derive(Debug)]
pub struct Sources {
    pub files: Vec<Source>,
    pub dimensions: Vec<String>,
}

pub fn collect(loaded: &Loaded) -> Result<Sources> {
    let paths = loaded.input_files()?;
    let labeling = &loaded.config.labeling;
    let scheme = match (&labeling.mode, &labeling.scheme) {
        (LabelMode::Filename, Some(p)) => Some(NamingScheme::load(loaded.resolve(p))?),
        (LabelMode::Filename, None) => Some(NamingScheme::iscx()),
        _ => None,
    };
    let root = labeling.root.as_ref().map(|r| loaded.resolve(r));
    let mut files = Vec::with_capacity(paths.len());
    for path in paths {
        let labels = match labeling.mode {
            LabelMode::Filename => {
                let file_name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
                labels_from_filename(&file_name, scheme.as_ref().expect("scheme loaded"))
            }
            LabelMode::Directory => labels_from_directory(&path, root.as_deref().expect("root validated"))?,
            LabelMode::None => LabelSet::default(),
        };
        for token in &labels.unmatched {
            log::warn!("{}: token {token:?} matches no label dimension", path.display());
        }
        files.push(Source {
            name: loaded.display(&path),
            path,
            labels,
        });
    }
    let dimensions = match &scheme {
        Some(s) => s.dimension_names().into_iter().map(str::to_string).collect(),
        None => {
            let deepest = files.iter().map(|f| f.labels.len()).max().unwrap_or(0);
            (0..deepest).map(|i| format!("dir_{i}")).collect()
        }
    };
    Ok(Sources { files, dimensions })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// The capture ended with a recoverable read error; earlier frames were used.
    Truncated,
    Failed,
}

/// Per-file record kept in run manifests.
#[derive(Debug, Clone, Serialize)]
pub struct FileReport {
    pub file: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub labels: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unmatched_tokens: Vec<String>,
    pub frames: u64,
    pub decoded: u64,
    pub skipped: BTreeMap<String, u64>,
    pub flows: u64,
}

impl FileReport {
    pub fn failed(&self) -> bool {
        self.status == Status::Failed
    }
}

/// Reads and assembles one capture. Flows come back sorted by first
/// timestamp; a file that cannot be opened yields no flows and a failed report.
pub fn load_flows(source: &Source, flow: &FlowConfig) -> (Vec<BiFlow>, FileReport) {
    let mut report = FileReport {
        file: source.name.clone(),
        status: Status::Ok,
        error: None,
        labels: source
            .labels
            .iter()
            .map(|(d, t)| (d.to_string(), t.to_string()))
            .collect(),
        unmatched_tokens: source.labels.unmatched.clone(),
        frames: 0,
        decoded: 0,
        skipped: BTreeMap::new(),
        flows: 0,
    };
    let reader = match open_capture(&source.path) {
        Ok(r) => r,
        Err(e) => {
            let reason = match e {
                CaptureError::Io { source: err, .. } => err.to_string(),
                other => other.to_string(),
            };
            log::error!("{}: {reason}", source.name);
            report.status = Status::Failed;
            report.error = Some(reason);
            return (Vec::new(), report);
        }
    };
    let assembly = assemble(reader, flow, source.name.clone());
    if let Some(e) = &assembly.error {
        log::warn!("{}: {e}", source.name);
        report.status = if e.is_recoverable() {
            Status::Truncated
        } else {
            Status::Failed
        };
        report.error = Some(e.to_string());
    }
    let mut flows = assembly.flows;
    flows.sort_by_key(|f| f.first_ts);
    report.frames = assembly.frames;
    report.decoded = assembly.decoded;
    report.skipped = assembly.skipped;
    report.flows = flows.len() as u64;
    (flows, report)
}

/// Runs `f` on a pool of `threads` workers (0 = one per core).
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}
