use super::{FeatureRecord, FeatureValue, Plugin, Shape};
use crate::flow::{BiFlow, Direction};

pub(crate) const NAMES: [&str; 3] = ["small_pkt_ratio", "small_pkt_ratio_fwd", "small_pkt_ratio_bwd"];

/// Share of packets whose payload is at most `threshold` bytes: overall,
/// forward, backward. A scope without packets is missing.
pub fn small_packet_ratio(flow: &BiFlow, threshold: u32) -> FeatureRecord {
    let ratio = |dir: Option<Direction>| -> FeatureValue {
        let (small, total) = flow
            .packets
            .iter()
            .filter(|p| dir.is_none_or(|d| p.direction == d))
            .fold((0usize, 0usize), |(s, t), p| {
                (s + usize::from(p.payload_size <= threshold), t + 1)
            });
        if total == 0 {
            FeatureValue::Missing
        } else {
            FeatureValue::Number(small as f64 / total as f64)
        }
    };
    let values = vec![
        ratio(None),
        ratio(Some(Direction::Forward)),
        ratio(Some(Direction::Backward)),
    ];
    FeatureRecord::flat("small_packet_ratio", NAMES.map(String::from).to_vec(), values)
}

pub(crate) struct SmallPacketRatio {
    pub threshold: u32,
}

impl Plugin for SmallPacketRatio {
    fn name(&self) -> &str {
        "small_packet_ratio"
    }
    fn shape(&self) -> Shape {
        Shape::Flat(3)
    }
    fn feature_names(&self) -> Vec<String> {
        NAMES.map(String::from).to_vec()
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        small_packet_ratio(flow, self.threshold)
    }
}
