//! Fixed-length input vectors of published classifiers, composed from the
//! individual extractors. Missing values are replaced by 0.

use std::fmt;
use std::net::IpAddr;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::flowpic::{flowpic, FlowPicConfig};
use super::payload::{byte_frequency, deepmal_bytes, n_bytes};
use super::{
    numbered, packet_relative_time, protocol_headers, res_req_diff_time, small_packet_ratio, stnn_features,
    FeatureRecord, FeatureValue, Plugin, PluginError, Shape, DEFAULT_SMALL_THRESHOLD,
};
use crate::capture::Timestamp;
use crate::flow::{BiFlow, ByteStream, EndReason, Endpoint, FlowKey, TcpState};

pub const DEFAULT_DEEPMAL_PACKETS: usize = 20;
pub const DEFAULT_DEEPMAL_BYTES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSet {
    M1Cnn,
    M2Cnn,
    DeepMal,
    Distiller,
    MalDist,
    M1Cnn278,
    M1Cnn1296,
    FlowPic,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 8] = [
        FeatureSet::M1Cnn,
        FeatureSet::M2Cnn,
        FeatureSet::DeepMal,
        FeatureSet::Distiller,
        FeatureSet::MalDist,
        FeatureSet::M1Cnn278,
        FeatureSet::M1Cnn1296,
        FeatureSet::FlowPic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::M1Cnn => "m1cnn",
            FeatureSet::M2Cnn => "m2cnn",
            FeatureSet::DeepMal => "deepmal",
            FeatureSet::Distiller => "distiller",
            FeatureSet::MalDist => "maldist",
            FeatureSet::M1Cnn278 => "m1cnn_278",
            FeatureSet::M1Cnn1296 => "m1cnn_1296",
            FeatureSet::FlowPic => "flowpic",
        }
    }

    pub fn shape(self, config: &SetConfig) -> Shape {
        match self {
            FeatureSet::M1Cnn => Shape::Flat(784),
            FeatureSet::M2Cnn => Shape::Matrix(28, 28),
            FeatureSet::DeepMal => Shape::Matrix(config.deepmal_m, config.deepmal_n),
            FeatureSet::Distiller => Shape::Flat(912),
            FeatureSet::MalDist => Shape::Flat(982),
            FeatureSet::M1Cnn278 => Shape::Flat(278),
            FeatureSet::M1Cnn1296 => Shape::Flat(1296),
            FeatureSet::FlowPic => Shape::Matrix(config.flowpic.size_bins, config.flowpic.time_bins),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = PluginError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureSet::ALL
            .into_iter()
            .find(|set| set.as_str() == s)
            .ok_or_else(|| PluginError::UnknownSet(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SetConfig {
    pub small_threshold: u32,
    pub byte_freq_packets: usize,
    pub deepmal_m: usize,
    pub deepmal_n: usize,
    pub flowpic: FlowPicConfig,
}

impl Default for SetConfig {
    fn default() -> Self {
        SetConfig {
            small_threshold: DEFAULT_SMALL_THRESHOLD,
            byte_freq_packets: 6,
            deepmal_m: DEFAULT_DEEPMAL_PACKETS,
            deepmal_n: DEFAULT_DEEPMAL_BYTES,
            flowpic: FlowPicConfig::default(),
        }
    }
}

struct Builder {
    names: Vec<String>,
    values: Vec<FeatureValue>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    fn push(&mut self, record: FeatureRecord) -> &mut Self {
        let n = record.len();
        self.push_range(record, 0, n)
    }

    fn push_range(&mut self, record: FeatureRecord, start: usize, end: usize) -> &mut Self {
        self.names.extend_from_slice(&record.names[start..end]);
        self.values.extend(
            record.values[start..end]
                .iter()
                .map(|v| FeatureValue::Number(v.as_f64().unwrap_or(0.0))),
        );
        self
    }

    fn finish(self, set: FeatureSet, shape: Shape) -> FeatureRecord {
        FeatureRecord::new(set.as_str(), self.names, self.values, shape)
    }
}

fn distiller(flow: &BiFlow, b: &mut Builder) {
    b.push(n_bytes(flow, 784)).push(protocol_headers(flow, 32));
}

/// Composed input vector of `set` for one flow.
pub fn feature_set(flow: &BiFlow, set: FeatureSet, config: &SetConfig) -> FeatureRecord {
    let mut b = Builder::new();
    match set {
        FeatureSet::M1Cnn | FeatureSet::M2Cnn => {
            b.push(n_bytes(flow, 784));
        }
        FeatureSet::DeepMal => {
            b.push(deepmal_bytes(flow, config.deepmal_m, config.deepmal_n));
        }
        FeatureSet::Distiller => distiller(flow, &mut b),
        FeatureSet::MalDist => {
            distiller(flow, &mut b);
            b.push(stnn_features(flow, config.small_threshold));
        }
        FeatureSet::M1Cnn278 => {
            b.push(n_bytes(flow, 200))
                .push(stnn_features(flow, config.small_threshold))
                .push(packet_relative_time(flow))
                .push_range(small_packet_ratio(flow, config.small_threshold), 1, 3)
                .push(res_req_diff_time(flow));
        }
        FeatureSet::M1Cnn1296 => {
            b.push(n_bytes(flow, 784))
                .push(byte_frequency(flow, config.byte_freq_packets));
        }
        FeatureSet::FlowPic => {
            let fp = &config.flowpic;
            let dense = flowpic(flow, fp)
                .first()
                .map_or_else(|| vec![0.0; fp.size_bins * fp.time_bins], |h| h.to_dense());
            b.names = numbered("flowpic_", dense.len());
            b.values = dense.into_iter().map(FeatureValue::Number).collect();
        }
    }
    b.finish(set, set.shape(config))
}

fn empty_flow() -> BiFlow {
    let ip = IpAddr::from([0, 0, 0, 0]);
    BiFlow {
        key: FlowKey {
            ip_lo: ip,
            ip_hi: ip,
            port_lo: 0,
            port_hi: 0,
            protocol: 0,
        },
        initiator: Endpoint { ip, port: 0 },
        packets: Vec::new(),
        first_ts: Timestamp(0),
        last_ts: Timestamp(0),
        tcp_state: TcpState::default(),
        source_file: PathBuf::new(),
        end_reason: EndReason::EndOfCapture,
        dns_payloads: Vec::new(),
        tls_stream_fwd: ByteStream::default(),
        tls_stream_bwd: ByteStream::default(),
    }
}

pub(crate) struct FeatureSetPlugin {
    pub set: FeatureSet,
    pub config: SetConfig,
}

impl Plugin for FeatureSetPlugin {
    fn name(&self) -> &str {
        self.set.as_str()
    }
    fn shape(&self) -> Shape {
        self.set.shape(&self.config)
    }
    fn feature_names(&self) -> Vec<String> {
        feature_set(&empty_flow(), self.set, &self.config).names
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        feature_set(flow, self.set, &self.config)
    }
}
