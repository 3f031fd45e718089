//! `extract`: one CSV row of features per flow, plus sparse FlowPic files.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use anyhow::{Context, Result};
use flowfeat::capture::Timestamp;
use flowfeat::flow::BiFlow;
use flowfeat::plugins::{flowpic, AsnDb, FlowPicConfig, FlowPicHistogram, Plugin, PluginSpec};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Loaded;
use crate::manifest::Manifest;
use crate::source::{self, FileReport, Source};

pub const META_COLUMNS: [&str; 11] = [
    "flow_id",
    "source_file",
    "src_ip",
    "src_port",
    "dst_ip",
    "dst_port",
    "protocol",
    "first_ts",
    "last_ts",
    "packets",
    "end_reason",
];

/// First 8 bytes of SHA-256 over source file, flow key and first timestamp.
pub fn flow_id(source: &str, flow: &BiFlow) -> String {
    let mut h = Sha256::new();
    h.update(source.as_bytes());
    h.update([0]);
    h.update(flow.key.to_string().as_bytes());
    h.update([0]);
    h.update(flow.first_ts.micros().to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

fn seconds(ts: Timestamp) -> String {
    let us = ts.micros();
    format!("{}.{:06}", us / 1_000_000, us % 1_000_000)
}

/// Plugin column names; names used by more than one plugin get a `p<index>.` prefix.
pub fn feature_columns(plugins: &[Box<dyn Plugin>]) -> Vec<String> {
    let names: Vec<Vec<String>> = plugins.iter().map(|p| p.feature_names()).collect();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for n in names.iter().flatten() {
        *seen.entry(n).or_default() += 1;
    }
    names
        .iter()
        .enumerate()
        .flat_map(|(i, ns)| {
            let seen = &seen;
            ns.iter().map(move |n| {
                if seen[n.as_str()] > 1 {
                    format!("p{i}.{n}")
                } else {
                    n.clone()
                }
            })
        })
        .collect()
}

struct PicFile {
    plugin: usize,
    flow_id: String,
    window: u64,
    packets: u64,
    body: String,
}

impl PicFile {
    fn path(&self) -> String {
        format!("flowpic/p{}/{}_w{}.csv", self.plugin, self.flow_id, self.window)
    }
}

fn sparse(h: &FlowPicHistogram) -> String {
    let mut s = String::from("row,col,count\n");
    for ((row, col), n) in &h.counts {
        s.push_str(&format!("{row},{col},{n}\n"));
    }
    s
}

struct FileOutput {
    report: FileReport,
    rows: Vec<Vec<String>>,
    pics: Vec<PicFile>,
}

struct Job<'a> {
    plugins: &'a [Box<dyn Plugin>],
    flowpics: &'a [(usize, FlowPicConfig)],
    dimensions: &'a [String],
    loaded: &'a Loaded,
}

impl Job<'_> {
    fn process(&self, src: &Source) -> FileOutput {
        let (flows, report) = source::load_flows(src, &self.loaded.config.flow);
        let mut rows = Vec::with_capacity(flows.len());
        let mut pics = Vec::new();
        for flow in &flows {
            let id = flow_id(&src.name, flow);
            let responder = flow.responder();
            let mut row = vec![
                id.clone(),
                src.name.clone(),
                flow.initiator.ip.to_string(),
                flow.initiator.port.to_string(),
                responder.ip.to_string(),
                responder.port.to_string(),
                flow.protocol().to_string(),
                seconds(flow.first_ts),
                seconds(flow.last_ts),
                flow.packet_count().to_string(),
                flow.end_reason.as_str().to_string(),
            ];
            row.extend(
                self.dimensions
                    .iter()
                    .map(|d| src.labels.get(d).unwrap_or("").to_string()),
            );
            for p in self.plugins {
                row.extend(p.extract(flow).values.iter().map(ToString::to_string));
            }
            rows.push(row);
            for (plugin, cfg) in self.flowpics {
                for h in flowpic(flow, cfg) {
                    pics.push(PicFile {
                        plugin: *plugin,
                        flow_id: id.clone(),
                        window: h.window_index,
                        packets: h.total(),
                        body: sparse(&h),
                    });
                }
            }
        }
        FileOutput { report, rows, pics }
    }
}

#[derive(Serialize)]
struct PicEntry {
    file: String,
    flow_id: String,
    window: u64,
    packets: u64,
}

#[derive(Serialize)]
struct PicPlugin {
    plugin: usize,
    #[serde(flatten)]
    config: FlowPicConfig,
    rows: &'static str,
    cols: &'static str,
    files: Vec<PicEntry>,
}

/// Runs extraction; returns the written manifest.
pub fn run(loaded: &Loaded) -> Result<Manifest> {
    loaded.validate(true)?;
    let sources = source::collect(loaded)?;
    let asn = match &loaded.config.asn_db {
        Some(p) => Some(Arc::new(
            AsnDb::open(loaded.resolve(p)).context("cannot load ASN database")?,
        )),
        None => None,
    };
    let specs = &loaded.config.plugins;
    let plugins = specs
        .iter()
        .map(|s| s.build(asn.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let flowpics: Vec<(usize, FlowPicConfig)> = specs
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            PluginSpec::FlowPic { config } => Some((i, config.clone())),
            _ => None,
        })
        .collect();

    let job = Job {
        plugins: &plugins,
        flowpics: &flowpics,
        dimensions: &sources.dimensions,
        loaded,
    };
    let outputs: Vec<FileOutput> = source::with_pool(loaded.config.parallelism, || {
        sources.files.par_iter().map(|s| job.process(s)).collect()
    })?;

    let out_dir = loaded.output_dir();
    std::fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let features = feature_columns(&plugins);
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(
        META_COLUMNS
            .iter()
            .copied()
            .chain(sources.dimensions.iter().map(String::as_str))
            .chain(features.iter().map(String::as_str)),
    )?;
    for out in &outputs {
        for row in &out.rows {
            csv.write_record(row)?;
        }
    }
    let csv = csv.into_inner().map_err(|e| e.into_error())?;

    let pic_dir = out_dir.join("flowpic");
    if pic_dir.exists() {
        std::fs::remove_dir_all(&pic_dir).with_context(|| format!("cannot clear {}", pic_dir.display()))?;
    }
    let mut reports = Vec::with_capacity(outputs.len());
    let mut pic_index: BTreeMap<usize, Vec<PicEntry>> = flowpics.iter().map(|(i, _)| (*i, Vec::new())).collect();
    let mut pic_digest = Sha256::new();
    let mut pic_files = 0u64;
    for out in outputs {
        for pic in out.pics {
            let path = pic.path();
            let full = out_dir.join(&path);
            std::fs::create_dir_all(full.parent().expect("flowpic path has a parent"))?;
            std::fs::write(&full, &pic.body).with_context(|| format!("cannot write {}", full.display()))?;
            pic_digest.update(path.as_bytes());
            pic_digest.update(pic.body.as_bytes());
            pic_files += 1;
            pic_index.get_mut(&pic.plugin).expect("known plugin").push(PicEntry {
                file: path,
                flow_id: pic.flow_id,
                window: pic.window,
                packets: pic.packets,
            });
        }
        reports.push(out.report);
    }

    let mut manifest = Manifest::new("extract", loaded, reports);
    manifest.counts.insert("rows", manifest.counts["flows"]);
    manifest.counts.insert("feature_columns", features.len() as u64);
    manifest.write_output(&out_dir, "features.csv", &csv)?;
    if !flowpics.is_empty() {
        let index: Vec<PicPlugin> = flowpics
            .iter()
            .map(|(i, cfg)| PicPlugin {
                plugin: *i,
                config: cfg.clone(),
                rows: "size_bin",
                cols: "time_bin",
                files: pic_index.remove(i).unwrap_or_default(),
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&index)?;
        text.push('\n');
        manifest.write_output(&out_dir, "flowpic/manifest.json", text.as_bytes())?;
        manifest.counts.insert("flowpic_files", pic_files);
        manifest
            .outputs
            .insert("flowpic/*.csv".into(), hex::encode(pic_digest.finalize()));
    }
    manifest.save(&out_dir)?;
    log::info!(
        "{} flows from {} files written to {}",
        manifest.counts["flows"],
        manifest.inputs.len(),
        out_dir.display()
    );
    Ok(manifest)
}
