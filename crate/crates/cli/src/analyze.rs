//! `analyze`: per-label flow statistics, protocol mix and unopened TCP counts.

use anyhow::Result;
use flowfeat::analysis::{DatasetProfile, SOURCE_FILE_DIMENSION};
use rayon::prelude::*;

use crate::config::Loaded;
use crate::manifest::Manifest;
use crate::source;

/// Report dimensions: the configured ones, else every label dimension, else
/// the capture file.
fn dimensions(loaded: &Loaded, known: &[String]) -> Vec<String> {
    if !loaded.config.analysis.group_by.is_empty() {
        loaded.config.analysis.group_by.clone()
    } else if !known.is_empty() {
        known.to_vec()
    } else {
        vec![SOURCE_FILE_DIMENSION.to_string()]
    }
}

fn file_stem(dimension: &str) -> String {
    dimension
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

pub fn run(loaded: &Loaded) -> Result<Manifest> {
    loaded.validate(false)?;
    let sources = source::collect(loaded)?;
    let dims = dimensions(loaded, &sources.dimensions);

    let partial: Vec<_> = source::with_pool(loaded.config.parallelism, || {
        sources
            .files
            .par_iter()
            .map(|src| {
                let (flows, report) = source::load_flows(src, &loaded.config.flow);
                let mut profiles: Vec<DatasetProfile> = dims.iter().map(DatasetProfile::new).collect();
                for flow in &flows {
                    for p in &mut profiles {
                        p.add(flow, &src.labels);
                    }
                }
                (profiles, report)
            })
            .collect()
    })?;

    let mut profiles: Vec<DatasetProfile> = dims.iter().map(DatasetProfile::new).collect();
    let mut reports = Vec::with_capacity(partial.len());
    for (file_profiles, report) in partial {
        for (total, p) in profiles.iter_mut().zip(file_profiles) {
            total.merge(p);
        }
        reports.push(report);
    }

    let out_dir = loaded.output_dir();
    std::fs::create_dir_all(&out_dir)?;
    let mut manifest = Manifest::new("analyze", loaded, reports);
    let mut summary = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        let stem = file_stem(p.dimension());
        let mut buf = Vec::new();
        p.write_label_stats_csv(&mut buf)?;
        manifest.write_output(&out_dir, &format!("label_stats_{stem}.csv"), &buf)?;
        buf.clear();
        p.write_protocol_csv(&mut buf)?;
        manifest.write_output(&out_dir, &format!("protocols_{stem}.csv"), &buf)?;
        buf.clear();
        p.write_unopened_csv(&mut buf)?;
        manifest.write_output(&out_dir, &format!("unopened_tcp_{stem}.csv"), &buf)?;
        if i > 0 {
            summary.push(b'\n');
        }
        p.write_summary(&mut summary)?;
    }
    manifest.write_output(&out_dir, "summary.txt", &summary)?;
    manifest.save(&out_dir)?;
    Ok(manifest)
}
