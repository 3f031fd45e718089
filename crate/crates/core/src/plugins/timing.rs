use super::stats::{mean, median};
use super::{FeatureRecord, FeatureValue, Plugin, Shape};
use crate::flow::{BiFlow, Direction};

pub(crate) const RELATIVE_TIME_NAMES: [&str; 3] = ["rel_time_last", "rel_time_mean", "rel_time_median"];
pub(crate) const RES_REQ_NAMES: [&str; 3] = ["res_req_min", "res_req_mean", "res_req_max"];

/// `[duration, mean, median]` of packet times relative to the first packet.
/// Duration is missing for single-packet flows.
pub fn packet_relative_time(flow: &BiFlow) -> FeatureRecord {
    let times: Vec<f64> = flow.packets.iter().map(|p| p.rel_time).collect();
    let last = if times.len() >= 2 { times.last().copied() } else { None };
    let values = vec![
        FeatureValue::from(last),
        FeatureValue::from(mean(&times)),
        FeatureValue::from(median(&times)),
    ];
    FeatureRecord::flat(
        "packet_relative_time",
        RELATIVE_TIME_NAMES.map(String::from).to_vec(),
        values,
    )
}

/// Response delay: for each backward packet, seconds since the most recent
/// preceding forward packet. Reports `[min, mean, max]`, missing when no
/// backward packet follows a forward one.
pub fn res_req_diff_time(flow: &BiFlow) -> FeatureRecord {
    let mut last_fwd = None;
    let mut gaps = Vec::new();
    for p in &flow.packets {
        match p.direction {
            Direction::Forward => last_fwd = Some(p.rel_time),
            Direction::Backward => {
                if let Some(t) = last_fwd {
                    gaps.push(p.rel_time - t);
                }
            }
        }
    }
    let values = if gaps.is_empty() {
        vec![FeatureValue::Missing; 3]
    } else {
        let min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        let max = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        vec![min.into(), FeatureValue::from(mean(&gaps)), max.into()]
    };
    FeatureRecord::flat("res_req_diff_time", RES_REQ_NAMES.map(String::from).to_vec(), values)
}

pub(crate) struct PacketRelativeTime;

impl Plugin for PacketRelativeTime {
    fn name(&self) -> &str {
        "packet_relative_time"
    }
    fn shape(&self) -> Shape {
        Shape::Flat(3)
    }
    fn feature_names(&self) -> Vec<String> {
        RELATIVE_TIME_NAMES.map(String::from).to_vec()
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        packet_relative_time(flow)
    }
}

pub(crate) struct ResReqDiffTime;

impl Plugin for ResReqDiffTime {
    fn name(&self) -> &str {
        "res_req_diff_time"
    }
    fn shape(&self) -> Shape {
        Shape::Flat(3)
    }
    fn feature_names(&self) -> Vec<String> {
        RES_REQ_NAMES.map(String::from).to_vec()
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        res_req_diff_time(flow)
    }
}
