//! Clumps: maximal runs of consecutive same-direction packets.
//!
//! For each scope (`all`, `fwd`, `bwd`) the record holds the clump count and
//! min/max/mean/std of
//! - `size`: packets per clump,
//! - `length`: IP bytes per clump,
//! - `iat`: milliseconds between the starts of consecutive clumps in the scope.
//!
//! `iat` statistics need two clumps in the scope and are missing otherwise;
//! a scope without clumps has all statistics missing.

use super::stats::Summary;
use super::{FeatureRecord, FeatureValue, Plugin, Shape};
use crate::flow::{BiFlow, Direction};

#[derive(Debug, Clone, PartialEq)]
pub struct Clump {
    pub direction: Direction,
    pub packet_count: usize,
    pub total_bytes: u64,
    pub sizes: Vec<u32>,
    pub start: f64,
    pub end: f64,
}

/// Splits `(direction, time, size)` items into maximal same-direction runs.
pub fn partition_clumps(items: impl IntoIterator<Item = (Direction, f64, u32)>) -> Vec<Clump> {
    let mut out: Vec<Clump> = Vec::new();
    for (direction, time, size) in items {
        match out.last_mut() {
            Some(c) if c.direction == direction => {
                c.packet_count += 1;
                c.total_bytes += u64::from(size);
                c.sizes.push(size);
                c.end = time;
            }
            _ => out.push(Clump {
                direction,
                packet_count: 1,
                total_bytes: u64::from(size),
                sizes: vec![size],
                start: time,
                end: time,
            }),
        }
    }
    out
}

/// Packet clumps of a flow.
pub fn flow_clumps(flow: &BiFlow) -> Vec<Clump> {
    partition_clumps(flow.packets.iter().map(|p| (p.direction, p.rel_time, p.ip_size)))
}

const SCOPES: [&str; 3] = ["all", "fwd", "bwd"];
const METRICS: [&str; 3] = ["size", "length", "iat"];
const STATS: [&str; 4] = ["min", "max", "mean", "std"];

/// 39 names: per scope, `count` then metric x statistic.
pub fn clump_feature_names(prefix: &str) -> Vec<String> {
    let mut names = Vec::with_capacity(39);
    for scope in SCOPES {
        names.push(format!("{prefix}{scope}_count"));
        for metric in METRICS {
            for stat in STATS {
                names.push(format!("{prefix}{scope}_{metric}_{stat}"));
            }
        }
    }
    names
}

/// Values matching [`clump_feature_names`].
pub fn clump_features(clumps: &[Clump]) -> Vec<FeatureValue> {
    let mut values = Vec::with_capacity(39);
    for scope in [None, Some(Direction::Forward), Some(Direction::Backward)] {
        let members: Vec<&Clump> = clumps
            .iter()
            .filter(|c| scope.is_none_or(|d| c.direction == d))
            .collect();
        values.push(FeatureValue::Number(members.len() as f64));
        let sizes: Vec<f64> = members.iter().map(|c| c.packet_count as f64).collect();
        let lengths: Vec<f64> = members.iter().map(|c| c.total_bytes as f64).collect();
        let iats: Vec<f64> = members.windows(2).map(|w| (w[1].start - w[0].start) * 1000.0).collect();
        for sample in [&sizes, &lengths, &iats] {
            match Summary::of(sample) {
                Some(s) => values.extend(s.to_array().map(FeatureValue::Number)),
                None => values.extend(std::iter::repeat_n(FeatureValue::Missing, 4)),
            }
        }
    }
    values
}

/// Clump statistics of a flow's packets.
pub fn clumps(flow: &BiFlow) -> FeatureRecord {
    let values = clump_features(&flow_clumps(flow));
    FeatureRecord::flat("clumps", clump_feature_names("clump_"), values)
}

pub(crate) struct Clumps;

impl Plugin for Clumps {
    fn name(&self) -> &str {
        "clumps"
    }
    fn shape(&self) -> Shape {
        Shape::Flat(39)
    }
    fn feature_names(&self) -> Vec<String> {
        clump_feature_names("clump_")
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        clumps(flow)
    }
}
