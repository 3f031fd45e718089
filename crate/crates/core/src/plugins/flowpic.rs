//! Per-window 2D histograms of IP packet size against arrival time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FeatureRecord, FeatureValue, Plugin, PluginError, Shape};
use crate::flow::BiFlow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowPicConfig {
    pub window_seconds: f64,
    pub size_bins: usize,
    pub time_bins: usize,
    pub size_max: u32,
}

impl Default for FlowPicConfig {
    fn default() -> Self {
        FlowPicConfig {
            window_seconds: 60.0,
            size_bins: 1500,
            time_bins: 1500,
            size_max: 1500,
        }
    }
}

impl FlowPicConfig {
    pub fn validate(&self) -> Result<(), PluginError> {
        let bad = |reason: &str| {
            Err(PluginError::BadParameter {
                plugin: "flowpic",
                reason: reason.to_string(),
            })
        };
        if !(self.window_seconds.is_finite() && self.window_seconds > 0.0) {
            return bad("window_seconds must be positive");
        }
        if self.size_bins == 0 || self.time_bins == 0 {
            return bad("bin counts must be at least 1");
        }
        if self.size_max == 0 {
            return bad("size_max must be at least 1");
        }
        Ok(())
    }
}

/// Sparse histogram for one time window; keys are `(size_bin, time_bin)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowPicHistogram {
    pub window_index: u64,
    pub size_bins: usize,
    pub time_bins: usize,
    pub counts: BTreeMap<(usize, usize), u32>,
}

impl FlowPicHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    /// Row-major `size_bins x time_bins`.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.size_bins * self.time_bins];
        for (&(r, c), &n) in &self.counts {
            out[r * self.time_bins + c] = f64::from(n);
        }
        out
    }
}

/// One histogram per nonempty window, in window order. Windows start at the
/// first packet and are `window_seconds` long.
pub fn flowpic(flow: &BiFlow, config: &FlowPicConfig) -> Vec<FlowPicHistogram> {
    let w = config.window_seconds;
    let mut windows: BTreeMap<u64, BTreeMap<(usize, usize), u32>> = BTreeMap::new();
    for p in &flow.packets {
        let t = p.rel_time.max(0.0);
        let index = (t / w).floor() as u64;
        let within = t - index as f64 * w;
        let size = p.ip_size.min(config.size_max);
        let size_bin = ((u64::from(size) * config.size_bins as u64 / u64::from(config.size_max)) as usize)
            .min(config.size_bins - 1);
        let time_bin = ((within / w * config.time_bins as f64).floor() as usize).min(config.time_bins - 1);
        *windows
            .entry(index)
            .or_default()
            .entry((size_bin, time_bin))
            .or_default() += 1;
    }
    windows
        .into_iter()
        .map(|(window_index, counts)| FlowPicHistogram {
            window_index,
            size_bins: config.size_bins,
            time_bins: config.time_bins,
            counts,
        })
        .collect()
}

pub(crate) struct FlowPicPlugin {
    pub config: FlowPicConfig,
}

impl FlowPicPlugin {
    pub fn histograms(&self, flow: &BiFlow) -> Vec<FlowPicHistogram> {
        flowpic(flow, &self.config)
    }
}

impl Plugin for FlowPicPlugin {
    fn name(&self) -> &str {
        "flowpic"
    }
    fn shape(&self) -> Shape {
        Shape::Flat(1)
    }
    fn feature_names(&self) -> Vec<String> {
        vec!["flowpic_windows".into()]
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        let n = self.histograms(flow).len() as f64;
        FeatureRecord::flat("flowpic", self.feature_names(), vec![FeatureValue::Number(n)])
    }
}
