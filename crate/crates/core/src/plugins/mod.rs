//! Feature extractors over completed flows.
//!
//! Every extractor is a pure function from a [`BiFlow`] (plus parameters) to
//! a [`FeatureRecord`]. The functions are exposed directly (`n_bytes`,
//! `clumps`, ...) and wrapped as [`Plugin`] trait objects built from a
//! [`PluginSpec`], which is what the pipeline configuration refers to.
//!
//! Sizes and payloads: `payload` always means the transport-layer payload,
//! `size` always means the IP total length. Inter-arrival times are in
//! milliseconds, other times in seconds. Standard deviations are population
//! standard deviations.

pub mod asn;
mod clumps;
pub mod dns;
mod flowpic;
mod headers;
mod payload;
mod ratio;
mod sets;
mod stats;
mod stnn;
mod timing;
pub mod tls;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::flow::BiFlow;

pub use asn::{asn_info, AsnDb, AsnInfo, AsnLookup};
pub use clumps::{clump_feature_names, clump_features, clumps, flow_clumps, partition_clumps, Clump};
pub use dns::dns_features;
pub use flowpic::{flowpic, FlowPicConfig, FlowPicHistogram};
pub use headers::protocol_headers;
pub use payload::{byte_frequency, deepmal_bytes, n_bytes};
pub use ratio::small_packet_ratio;
pub use sets::{feature_set, FeatureSet, SetConfig};
pub use stats::Summary;
pub use stnn::{stnn_features, STNN_CATEGORIES, STNN_STATISTICS};
pub use timing::{packet_relative_time, res_req_diff_time};
pub use tls::tls_features;

/// Payload size (bytes) at or below which a packet counts as small.
pub const DEFAULT_SMALL_THRESHOLD: u32 = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Number(f64),
    Text(String),
    /// The feature is not defined for this flow.
    Missing,
}

impl FeatureValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FeatureValue::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, FeatureValue::Missing)
    }
}

impl From<f64> for FeatureValue {
    fn from(v: f64) -> Self {
        FeatureValue::Number(v)
    }
}

impl From<Option<f64>> for FeatureValue {
    fn from(v: Option<f64>) -> Self {
        v.map_or(FeatureValue::Missing, FeatureValue::Number)
    }
}

impl fmt::Display for FeatureValue {
    /// Missing renders as an empty string.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Number(v) => write!(f, "{v}"),
            FeatureValue::Text(s) => f.write_str(s),
            FeatureValue::Missing => Ok(()),
        }
    }
}

/// Logical layout of a record's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    /// Row-major `rows x cols`.
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Flat(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Flat(n) => write!(f, "({n})"),
            Shape::Matrix(r, c) => write!(f, "({r},{c})"),
        }
    }
}

/// Named, ordered feature values produced for one flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub plugin: String,
    pub names: Vec<String>,
    pub values: Vec<FeatureValue>,
    pub shape: Shape,
}

impl FeatureRecord {
    /// Panics if names, values and shape disagree on length.
    pub fn new(plugin: impl Into<String>, names: Vec<String>, values: Vec<FeatureValue>, shape: Shape) -> Self {
        assert_eq!(names.len(), values.len(), "feature names and values differ in length");
        assert_eq!(
            shape.len(),
            values.len(),
            "shape {shape} does not match {} values",
            values.len()
        );
        FeatureRecord {
            plugin: plugin.into(),
            names,
            values,
            shape,
        }
    }

    pub(crate) fn flat(plugin: &str, names: Vec<String>, values: Vec<FeatureValue>) -> Self {
        let shape = Shape::Flat(values.len());
        Self::new(plugin, names, values, shape)
    }

    pub(crate) fn numeric(plugin: &str, names: Vec<String>, values: impl IntoIterator<Item = f64>) -> Self {
        Self::flat(plugin, names, values.into_iter().map(FeatureValue::Number).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value by feature name.
    pub fn get(&self, name: &str) -> Option<&FeatureValue> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    /// Numeric view with missing values (and text) replaced by 0.
    pub fn dense(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_f64().unwrap_or(0.0)).collect()
    }
}

pub(crate) fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// A configured feature extractor.
pub trait Plugin: Send + Sync {
    fn name(&self) -> &str;
    fn shape(&self) -> Shape;
    /// Column names, identical for every flow.
    fn feature_names(&self) -> Vec<String>;
    fn extract(&self, flow: &BiFlow) -> FeatureRecord;
}

#[derive(Debug, thiserror::Error)]
pub enum PluginError {
    #[error("unknown feature set {0:?}")]
    UnknownSet(String),
    #[error("plugin {plugin}: {reason}")]
    BadParameter { plugin: &'static str, reason: String },
    #[error("plugin asn_info needs an ASN database")]
    MissingAsnDb,
}

fn default_n_bytes() -> usize {
    784
}
fn default_byte_freq_packets() -> usize {
    6
}
fn default_small_threshold() -> u32 {
    DEFAULT_SMALL_THRESHOLD
}
fn default_header_packets() -> usize {
    32
}
fn default_deepmal_m() -> usize {
    sets::DEFAULT_DEEPMAL_PACKETS
}
fn default_deepmal_n() -> usize {
    sets::DEFAULT_DEEPMAL_BYTES
}

/// Configuration-level description of one plugin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PluginSpec {
    NBytes {
        #[serde(default = "default_n_bytes")]
        n: usize,
    },
    ByteFrequency {
        #[serde(default = "default_byte_freq_packets")]
        packets: usize,
    },
    SmallPacketRatio {
        #[serde(default = "default_small_threshold")]
        threshold: u32,
    },
    ProtocolHeaders {
        #[serde(default = "default_header_packets")]
        n: usize,
    },
    Clumps,
    PacketRelativeTime,
    ResReqDiffTime,
    Stnn {
        #[serde(default = "default_small_threshold")]
        threshold: u32,
    },
    Dns,
    AsnInfo,
    Tls,
    #[serde(rename = "deepmal")]
    DeepMal {
        #[serde(default = "default_deepmal_m")]
        m: usize,
        #[serde(default = "default_deepmal_n")]
        n: usize,
    },
    /// Histograms are exported separately; the record holds the window count.
    #[serde(rename = "flowpic")]
    FlowPic {
        #[serde(flatten)]
        config: FlowPicConfig,
    },
    FeatureSet {
        set: String,
        #[serde(flatten)]
        config: SetConfig,
    },
}

impl PluginSpec {
    /// Instantiates the plugin; `asn` is required only by `asn_info`.
    pub fn build(&self, asn: Option<Arc<AsnDb>>) -> Result<Box<dyn Plugin>, PluginError> {
        fn positive(plugin: &'static str, what: &str, v: usize) -> Result<(), PluginError> {
            if v == 0 {
                Err(PluginError::BadParameter {
                    plugin,
                    reason: format!("{what} must be at least 1"),
                })
            } else {
                Ok(())
            }
        }
        let plugin: Box<dyn Plugin> = match self {
            PluginSpec::NBytes { n } => {
                positive("n_bytes", "n", *n)?;
                Box::new(payload::NBytes { n: *n })
            }
            PluginSpec::ByteFrequency { packets } => {
                positive("byte_frequency", "packets", *packets)?;
                Box::new(payload::ByteFrequency { packets: *packets })
            }
            PluginSpec::SmallPacketRatio { threshold } => Box::new(ratio::SmallPacketRatio { threshold: *threshold }),
            PluginSpec::ProtocolHeaders { n } => {
                positive("protocol_headers", "n", *n)?;
                Box::new(headers::ProtocolHeaders { n: *n })
            }
            PluginSpec::Clumps => Box::new(clumps::Clumps),
            PluginSpec::PacketRelativeTime => Box::new(timing::PacketRelativeTime),
            PluginSpec::ResReqDiffTime => Box::new(timing::ResReqDiffTime),
            PluginSpec::Stnn { threshold } => Box::new(stnn::Stnn { threshold: *threshold }),
            PluginSpec::Dns => Box::new(dns::Dns),
            PluginSpec::AsnInfo => Box::new(asn::AsnPlugin {
                db: asn.ok_or(PluginError::MissingAsnDb)?,
            }),
            PluginSpec::Tls => Box::new(tls::Tls),
            PluginSpec::DeepMal { m, n } => {
                positive("deepmal", "m", *m)?;
                positive("deepmal", "n", *n)?;
                Box::new(payload::DeepMal { m: *m, n: *n })
            }
            PluginSpec::FlowPic { config } => {
                config.validate()?;
                Box::new(flowpic::FlowPicPlugin { config: config.clone() })
            }
            PluginSpec::FeatureSet { set, config } => {
                let set: FeatureSet = set.parse()?;
                if set == FeatureSet::FlowPic {
                    config.flowpic.validate()?;
                }
                Box::new(sets::FeatureSetPlugin {
                    set,
                    config: config.clone(),
                })
            }
        };
        Ok(plugin)
    }
}
