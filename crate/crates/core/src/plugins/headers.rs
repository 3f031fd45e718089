use super::{FeatureRecord, FeatureValue, Plugin, Shape};
use crate::flow::BiFlow;

fn names(n: usize) -> Vec<String> {
    (0..n)
        .flat_map(|i| {
            ["iat_ms", "size", "dir", "win"]
                .into_iter()
                .map(move |f| format!("hdr_{i}_{f}"))
        })
        .collect()
}

/// `(n, 4)` matrix of `[IAT ms, IP size, direction, TCP window]` for the first
/// `n` packets. Direction is +1 forward, -1 backward; padding rows are all
/// zero so they are distinguishable from real packets.
pub fn protocol_headers(flow: &BiFlow, n: usize) -> FeatureRecord {
    let mut values = Vec::with_capacity(n * 4);
    let mut prev = None;
    for p in flow.packets.iter().take(n) {
        let iat = prev.map_or(0.0, |t| (p.rel_time - t) * 1000.0);
        prev = Some(p.rel_time);
        values.extend([
            iat,
            f64::from(p.ip_size),
            p.direction.sign(),
            f64::from(p.tcp_window.unwrap_or(0)),
        ]);
    }
    values.resize(n * 4, 0.0);
    let values = values.into_iter().map(FeatureValue::Number).collect();
    FeatureRecord::new("protocol_headers", names(n), values, Shape::Matrix(n, 4))
}

pub(crate) struct ProtocolHeaders {
    pub n: usize,
}

impl Plugin for ProtocolHeaders {
    fn name(&self) -> &str {
        "protocol_headers"
    }
    fn shape(&self) -> Shape {
        Shape::Matrix(self.n, 4)
    }
    fn feature_names(&self) -> Vec<String> {
        names(self.n)
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        protocol_headers(flow, self.n)
    }
}
