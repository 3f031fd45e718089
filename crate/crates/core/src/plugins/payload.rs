use super::{numbered, FeatureRecord, FeatureValue, Plugin, Shape};
use crate::flow::{BiFlow, Direction};

/// First `n` payload bytes of the flow, both directions in arrival order,
/// zero-padded.
pub fn n_bytes(flow: &BiFlow, n: usize) -> FeatureRecord {
    let mut out: Vec<f64> = flow
        .packets
        .iter()
        .flat_map(|p| p.payload.iter())
        .take(n)
        .map(|&b| f64::from(b))
        .collect();
    out.resize(n, 0.0);
    FeatureRecord::numeric("n_bytes", numbered("byte_", n), out)
}

/// Byte-value histogram over the payloads of the first `packets` packets:
/// positions 0-255 count forward bytes, 256-511 backward bytes. Packets
/// without payload still count toward `packets`.
pub fn byte_frequency(flow: &BiFlow, packets: usize) -> FeatureRecord {
    let mut counts = [0u64; 512];
    for p in flow.packets.iter().take(packets) {
        let base = match p.direction {
            Direction::Forward => 0,
            Direction::Backward => 256,
        };
        for &b in &p.payload {
            counts[base + usize::from(b)] += 1;
        }
    }
    let mut names = numbered("fwd_byte_freq_", 256);
    names.extend(numbered("bwd_byte_freq_", 256));
    FeatureRecord::numeric("byte_frequency", names, counts.iter().map(|&c| c as f64))
}

/// `m x n` matrix: row `i` holds the first `n` payload bytes of packet `i`.
pub fn deepmal_bytes(flow: &BiFlow, m: usize, n: usize) -> FeatureRecord {
    let mut values = Vec::with_capacity(m * n);
    for i in 0..m {
        let payload = flow.packets.get(i).map_or(&[][..], |p| p.payload.as_slice());
        let row = payload.iter().take(n).map(|&b| FeatureValue::Number(f64::from(b)));
        values.extend(row);
        values.resize((i + 1) * n, FeatureValue::Number(0.0));
    }
    FeatureRecord::new("deepmal", deepmal_names(m, n), values, Shape::Matrix(m, n))
}

fn deepmal_names(m: usize, n: usize) -> Vec<String> {
    (0..m)
        .flat_map(|i| (0..n).map(move |j| format!("pkt_{i}_byte_{j}")))
        .collect()
}

pub(crate) struct NBytes {
    pub n: usize,
}

impl Plugin for NBytes {
    fn name(&self) -> &str {
        "n_bytes"
    }
    fn shape(&self) -> Shape {
        Shape::Flat(self.n)
    }
    fn feature_names(&self) -> Vec<String> {
        numbered("byte_", self.n)
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        n_bytes(flow, self.n)
    }
}

pub(crate) struct ByteFrequency {
    pub packets: usize,
}

impl Plugin for ByteFrequency {
    fn name(&self) -> &str {
        "byte_frequency"
    }
    fn shape(&self) -> Shape {
        Shape::Flat(512)
    }
    fn feature_names(&self) -> Vec<String> {
        let mut names = numbered("fwd_byte_freq_", 256);
        names.extend(numbered("bwd_byte_freq_", 256));
        names
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        byte_frequency(flow, self.packets)
    }
}

pub(crate) struct DeepMal {
    pub m: usize,
    pub n: usize,
}

impl Plugin for DeepMal {
    fn name(&self) -> &str {
        "deepmal"
    }
    fn shape(&self) -> Shape {
        Shape::Matrix(self.m, self.n)
    }
    fn feature_names(&self) -> Vec<String> {
        deepmal_names(self.m, self.n)
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        deepmal_bytes(flow, self.m, self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Direction::{Backward as B, Forward as F};
    use crate::plugins::testutil::flow;

    #[test]
    fn n_bytes_pads() {
        let f = flow(false, &[(F, 0.0, 31, b"abc")]);
        assert_eq!(n_bytes(&f, 5).dense(), vec![97.0, 98.0, 99.0, 0.0, 0.0]);
    }

    #[test]
    fn n_bytes_concatenates_in_arrival_order() {
        let f = flow(false, &[(F, 0.0, 30, &[1, 2]), (B, 0.1, 29, &[3])]);
        assert_eq!(n_bytes(&f, 3).dense(), vec![1.0, 2.0, 3.0]);
        assert_eq!(n_bytes(&f, 2).dense(), vec![1.0, 2.0]);
    }

    #[test]
    fn byte_frequency_single_forward_packet() {
        let f = flow(false, &[(F, 0.0, 31, &[0, 0, 7])]);
        let v = byte_frequency(&f, 6).dense();
        assert_eq!(v.len(), 512);
        assert_eq!(v[0], 2.0);
        assert_eq!(v[7], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 3.0);
        assert!(v[256..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn byte_frequency_counts_empty_packets_toward_limit() {
        let f = flow(false, &[(F, 0.0, 28, b""), (B, 0.1, 29, &[9])]);
        assert!(byte_frequency(&f, 1).dense().iter().all(|&c| c == 0.0));
        assert_eq!(byte_frequency(&f, 2).dense()[256 + 9], 1.0);
    }

    #[test]
    fn deepmal_rows() {
        let f = flow(false, &[(F, 0.0, 30, b"ab"), (B, 0.1, 32, b"cdef")]);
        let r = deepmal_bytes(&f, 2, 4);
        assert_eq!(r.shape, Shape::Matrix(2, 4));
        assert_eq!(r.dense(), vec![97.0, 98.0, 0.0, 0.0, 99.0, 100.0, 101.0, 102.0]);

        let f = flow(false, &[(F, 0.0, 30, b"xy")]);
        let r = deepmal_bytes(&f, 3, 2);
        assert_eq!(r.dense()[2..], [0.0; 4]);
    }
}
