//! `(5, 14)` per-category statistics matrix.
//!
//! Rows are packet categories, columns are statistics; both lists are fixed
//! by [`STNN_CATEGORIES`] and [`STNN_STATISTICS`]. Empty categories give an
//! all-zero row. With fewer than two packets in a category the IAT
//! statistics are zero.

use super::stats::Summary;
use super::{FeatureRecord, FeatureValue, Plugin, Shape};
use crate::flow::{BiFlow, Direction, PacketRecord};

pub const STNN_CATEGORIES: [&str; 5] = ["all", "fwd", "bwd", "small", "large"];

pub const STNN_STATISTICS: [&str; 14] = [
    "count",
    "bytes",
    "size_min",
    "size_max",
    "size_mean",
    "size_std",
    "iat_min_ms",
    "iat_max_ms",
    "iat_mean_ms",
    "iat_std_ms",
    "duration_s",
    "bytes_per_s",
    "pkts_per_s",
    "share",
];

fn names() -> Vec<String> {
    STNN_CATEGORIES
        .iter()
        .flat_map(|c| STNN_STATISTICS.iter().map(move |s| format!("stnn_{c}_{s}")))
        .collect()
}

fn row(members: &[&PacketRecord], flow_packets: usize) -> [f64; 14] {
    if members.is_empty() {
        return [0.0; 14];
    }
    let sizes: Vec<f64> = members.iter().map(|p| f64::from(p.ip_size)).collect();
    let iats: Vec<f64> = members
        .windows(2)
        .map(|w| (w[1].rel_time - w[0].rel_time) * 1000.0)
        .collect();
    let size = Summary::of(&sizes).expect("non-empty");
    let iat = Summary::of(&iats).map_or([0.0; 4], Summary::to_array);
    let count = members.len() as f64;
    let bytes: f64 = sizes.iter().sum();
    let duration = members[members.len() - 1].rel_time - members[0].rel_time;
    let rate = |x: f64| if duration > 0.0 { x / duration } else { 0.0 };
    [
        count,
        bytes,
        size.min,
        size.max,
        size.mean,
        size.std,
        iat[0],
        iat[1],
        iat[2],
        iat[3],
        duration,
        rate(bytes),
        rate(count),
        count / flow_packets as f64,
    ]
}

/// Categories: all packets, forward, backward, payload `<= threshold`,
/// payload `> threshold`.
pub fn stnn_features(flow: &BiFlow, threshold: u32) -> FeatureRecord {
    let all: Vec<&PacketRecord> = flow.packets.iter().collect();
    let pick = |pred: &dyn Fn(&PacketRecord) -> bool| -> Vec<&PacketRecord> {
        all.iter().copied().filter(|p| pred(p)).collect()
    };
    let categories = [
        all.clone(),
        pick(&|p| p.direction == Direction::Forward),
        pick(&|p| p.direction == Direction::Backward),
        pick(&|p| p.payload_size <= threshold),
        pick(&|p| p.payload_size > threshold),
    ];
    let values: Vec<FeatureValue> = categories
        .iter()
        .flat_map(|members| row(members, all.len()))
        .map(FeatureValue::Number)
        .collect();
    FeatureRecord::new("stnn", names(), values, Shape::Matrix(5, 14))
}

pub(crate) struct Stnn {
    pub threshold: u32,
}

impl Plugin for Stnn {
    fn name(&self) -> &str {
        "stnn"
    }
    fn shape(&self) -> Shape {
        Shape::Matrix(5, 14)
    }
    fn feature_names(&self) -> Vec<String> {
        names()
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        stnn_features(flow, self.threshold)
    }
}
