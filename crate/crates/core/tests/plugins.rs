mod common;

use std::net::IpAddr;

use common::{assemble_bytes, close, make_flow, random_flow};
use flowfeat::capture::craft::{ethernet_frame, L4};
use flowfeat::capture::writer::PcapWriter;
use flowfeat::capture::{LinkType, Timestamp};
use flowfeat::flow::{BiFlow, Direction, FlowConfig};
use flowfeat::plugins::{
    byte_frequency, deepmal_bytes, dns_features, flowpic, n_bytes, stnn_features, FeatureRecord, FeatureValue,
    FlowPicConfig, PluginSpec,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

const EVERY_PLUGIN: &str = r#"
[[plugins]]
name = "n_bytes"
[[plugins]]
name = "n_bytes"
n = 3
[[plugins]]
name = "byte_frequency"
[[plugins]]
name = "small_packet_ratio"
threshold = 50
[[plugins]]
name = "protocol_headers"
n = 20
[[plugins]]
name = "clumps"
[[plugins]]
name = "packet_relative_time"
[[plugins]]
name = "res_req_diff_time"
[[plugins]]
name = "stnn"
[[plugins]]
name = "dns"
[[plugins]]
name = "tls"
[[plugins]]
name = "deepmal"
m = 4
n = 8
[[plugins]]
name = "flowpic"
window_seconds = 15.0
size_bins = 10
time_bins = 10
[[plugins]]
name = "feature_set"
set = "m1cnn"
[[plugins]]
name = "feature_set"
set = "m2cnn"
[[plugins]]
name = "feature_set"
set = "distiller"
[[plugins]]
name = "feature_set"
set = "maldist"
[[plugins]]
name = "feature_set"
set = "m1cnn_278"
[[plugins]]
name = "feature_set"
set = "m1cnn_1296"
[[plugins]]
name = "feature_set"
set = "deepmal"
deepmal_m = 3
deepmal_n = 5
[[plugins]]
name = "feature_set"
set = "flowpic"
flowpic = { size_bins = 8, time_bins = 4 }
"#;

#[derive(serde::Deserialize)]
struct Specs {
    plugins: Vec<PluginSpec>,
}

fn seeded_flows(seed: u64, count: usize) -> Vec<BiFlow> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count).map(|_| random_flow(&mut rng, 60)).collect()
}

#[test]
fn every_plugin_obeys_shape_law_and_is_pure() {
    let specs: Specs = toml::from_str(EVERY_PLUGIN).unwrap();
    let plugins: Vec<_> = specs.plugins.iter().map(|s| s.build(None).unwrap()).collect();
    for flow in seeded_flows(7, 40) {
        for p in &plugins {
            let r = p.extract(&flow);
            assert_eq!(r.len(), p.shape().len(), "{}", p.name());
            assert_eq!(r.shape, p.shape(), "{}", p.name());
            assert_eq!(r.names, p.feature_names(), "{}", p.name());
            assert_eq!(r, p.extract(&flow), "{}", p.name());
        }
    }
}

#[test]
fn asn_plugin_requires_database() {
    let spec: PluginSpec = toml::from_str("name = \"asn_info\"").unwrap();
    assert!(spec.build(None).is_err());
    let bad: Result<PluginSpec, _> = toml::from_str("name = \"feature_set\"\nset = \"nope\"");
    assert!(bad.unwrap().build(None).is_err());
}

fn dense(r: &FeatureRecord) -> Vec<f64> {
    r.dense()
}

proptest! {
    #[test]
    fn n_bytes_matches_concatenation(seed in any::<u64>(), n in 1usize..2000) {
        let flow = &seeded_flows(seed, 1)[0];
        let mut want: Vec<f64> = flow.packets.iter().flat_map(|p| p.payload.clone()).map(f64::from).collect();
        want.resize(n, 0.0);
        prop_assert_eq!(dense(&n_bytes(flow, n)), want);
    }

    #[test]
    fn byte_frequency_mass(seed in any::<u64>(), packets in 1usize..20) {
        let flow = &seeded_flows(seed, 1)[0];
        let v = dense(&byte_frequency(flow, packets));
        let mass = |d: Direction| flow.packets.iter().take(packets).filter(|p| p.direction == d).map(|p| p.payload.len() as f64).sum::<f64>();
        prop_assert_eq!(v[..256].iter().sum::<f64>(), mass(Direction::Forward));
        prop_assert_eq!(v[256..].iter().sum::<f64>(), mass(Direction::Backward));
    }

    #[test]
    fn deepmal_matches_slicing(seed in any::<u64>(), m in 1usize..12, n in 1usize..40) {
        let flow = &seeded_flows(seed, 1)[0];
        let v = dense(&deepmal_bytes(flow, m, n));
        for i in 0..m {
            for j in 0..n {
                let want = flow.packets.get(i).and_then(|p| p.payload.get(j)).map_or(0.0, |&b| f64::from(b));
                prop_assert_eq!(v[i * n + j], want);
            }
        }
    }

    #[test]
    fn flowpic_mass(seed in any::<u64>(), window in 1.0f64..120.0, bins in 1usize..64) {
        let flow = &seeded_flows(seed, 1)[0];
        let cfg = FlowPicConfig { window_seconds: window, size_bins: bins, time_bins: bins, size_max: 1500 };
        let hists = flowpic(flow, &cfg);
        let mut per_window = std::collections::BTreeMap::<u64, u64>::new();
        for p in &flow.packets {
            *per_window.entry((p.rel_time / window).floor() as u64).or_default() += 1;
        }
        prop_assert_eq!(hists.len(), per_window.len());
        for h in &hists {
            prop_assert_eq!(h.total(), per_window[&h.window_index]);
        }
    }

    #[test]
    fn stnn_all_row_matches_brute_force(seed in any::<u64>()) {
        let flow = &seeded_flows(seed, 1)[0];
        let v = dense(&stnn_features(flow, 100));
        let n = flow.packets.len();
        if n == 0 {
            prop_assert!(v[..14].iter().all(|&x| x == 0.0));
            return Ok(());
        }
        let sizes: Vec<f64> = flow.packets.iter().map(|p| f64::from(p.ip_size)).collect();
        let mean = sizes.iter().sum::<f64>() / n as f64;
        let std = (sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let dur = flow.packets[n - 1].rel_time - flow.packets[0].rel_time;
        prop_assert_eq!(v[0], n as f64);
        prop_assert_eq!(v[1], sizes.iter().sum::<f64>());
        prop_assert_eq!(v[2], sizes.iter().cloned().fold(f64::MAX, f64::min));
        prop_assert_eq!(v[3], sizes.iter().cloned().fold(f64::MIN, f64::max));
        prop_assert!(close(v[4], mean, 1e-12));
        prop_assert!(close(v[5], std, 1e-9));
        prop_assert!(close(v[10], dur, 1e-12));
        prop_assert_eq!(v[13], 1.0);
    }
}

fn dns_query() -> Vec<u8> {
    let mut m = vec![0x12, 0x34, 0x01, 0x00, 0, 1, 0, 0, 0, 0, 0, 0];
    for label in ["a-1", "example", "com"] {
        m.push(label.len() as u8);
        m.extend_from_slice(label.as_bytes());
    }
    m.extend_from_slice(&[0, 0, 1, 0, 1]);
    m
}

fn dns_response() -> Vec<u8> {
    let mut m = dns_query();
    m[2] = 0x81;
    m[3] = 0x80;
    m[7] = 2;
    for (ttl, addr) in [(300u32, [93, 184, 216, 34]), (100, [93, 184, 216, 35])] {
        m.extend_from_slice(&[0xc0, 0x0c, 0, 1, 0, 1]);
        m.extend_from_slice(&ttl.to_be_bytes());
        m.extend_from_slice(&[0, 4]);
        m.extend_from_slice(&addr);
    }
    m
}

#[test]
fn dns_over_udp_end_to_end() {
    let (c, s): (IpAddr, IpAddr) = ("10.0.0.1".parse().unwrap(), "10.0.0.53".parse().unwrap());
    let mut w = PcapWriter::new(Vec::new(), LinkType::Ethernet).unwrap();
    w.write_packet(
        Timestamp::from_micros(10),
        &ethernet_frame(c, s, L4::udp(5353, 53), &dns_query()),
    )
    .unwrap();
    w.write_packet(
        Timestamp::from_micros(20),
        &ethernet_frame(s, c, L4::udp(53, 5353), &dns_response()),
    )
    .unwrap();
    let a = assemble_bytes(&w.into_inner(), &FlowConfig::default());
    assert_eq!(a.flows.len(), 1);
    let r = dns_features(&a.flows[0]);
    let get = |n: &str| r.get(n).cloned().unwrap();
    assert_eq!(get("dns_queries"), FeatureValue::Number(1.0));
    assert_eq!(get("dns_answers"), FeatureValue::Number(2.0));
    assert_eq!(get("dns_a"), FeatureValue::Number(2.0));
    assert_eq!(get("dns_ttl_min"), FeatureValue::Number(100.0));
    assert_eq!(get("dns_ttl_mean"), FeatureValue::Number(200.0));
    assert_eq!(get("dns_qname_len"), FeatureValue::Number(15.0));
    assert_eq!(get("dns_qname_digits"), FeatureValue::Number(1.0));
    assert_eq!(get("dns_qname_hyphens"), FeatureValue::Number(1.0));
    assert_eq!(get("dns_qname_dots"), FeatureValue::Number(2.0));
    assert_eq!(get("dns_rcode"), FeatureValue::Number(0.0));
    assert_eq!(get("dns_malformed"), FeatureValue::Number(0.0));

    let not_dns = make_flow(false, vec![(Direction::Forward, 0.0, 60, vec![1, 2, 3])]);
    assert!(dns_features(&not_dns).values.iter().all(FeatureValue::is_missing));
}
