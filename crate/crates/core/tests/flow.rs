mod common;

use std::net::IpAddr;

use common::{assemble_bytes, flows_digest, synthetic_capture};
use flowfeat::capture::craft::{ethernet_frame, L4};
use flowfeat::capture::writer::PcapWriter;
use flowfeat::capture::{LinkType, TcpFlags, Timestamp};
use flowfeat::flow::{Direction, EndReason, FlowConfig};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn ip(s: &str) -> IpAddr {
    s.parse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn packets_are_conserved(
        seed in any::<u64>(),
        packets in 0usize..400,
        tuples in 1usize..30,
        max_flows in 1usize..40,
        max_packets in 1usize..50,
    ) {
        let mut rng = StdRng::seed_from_u64(seed);
        let bytes = synthetic_capture(&mut rng, packets, tuples);
        let config = FlowConfig {
            idle_timeout: 5.0,
            active_timeout: 20.0,
            max_flows,
            max_packets,
            ..FlowConfig::default()
        };
        let a = assemble_bytes(&bytes, &config);
        prop_assert_eq!(a.decoded, packets as u64);
        prop_assert_eq!(a.flows.iter().map(|f| f.packets.len() as u64).sum::<u64>(), a.decoded);
        for f in &a.flows {
            prop_assert!(!f.packets.is_empty());
            prop_assert!(f.packets.len() <= max_packets);
            prop_assert_eq!(f.packets[0].direction, Direction::Forward);
            prop_assert!(f.packets.windows(2).all(|w| w[0].rel_time <= w[1].rel_time));
        }
        let b = assemble_bytes(&bytes, &config);
        prop_assert_eq!(flows_digest(&a.flows), flows_digest(&b.flows));
    }
}

#[test]
fn handshake_and_direction_from_capture() {
    let (c, s) = (ip("10.0.0.1"), ip("93.184.216.34"));
    let frames = [
        (c, s, L4::tcp(40000, 443, 100, TcpFlags::SYN), &b""[..]),
        (s, c, L4::tcp(443, 40000, 900, TcpFlags::SYN | TcpFlags::ACK), b""),
        (c, s, L4::tcp(40000, 443, 101, TcpFlags::ACK), b""),
        (c, s, L4::tcp(40000, 443, 101, TcpFlags::ACK | TcpFlags::PSH), b"hello"),
        (s, c, L4::tcp(443, 40000, 901, TcpFlags::ACK | TcpFlags::PSH), b"world!"),
    ];
    let mut w = PcapWriter::new(Vec::new(), LinkType::Ethernet).unwrap();
    for (i, (src, dst, l4, payload)) in frames.iter().enumerate() {
        w.write_packet(
            Timestamp::from_micros(1_000_000 + i as u64 * 10_000),
            &ethernet_frame(*src, *dst, *l4, payload),
        )
        .unwrap();
    }
    let a = assemble_bytes(&w.into_inner(), &FlowConfig::default());
    assert_eq!(a.flows.len(), 1);
    let f = &a.flows[0];
    assert!(f.tcp_state.handshake_seen);
    assert!(!f.is_unopened_tcp());
    assert_eq!(f.initiator.ip, c);
    assert_eq!((f.forward_count(), f.backward_count()), (3, 2));
    assert_eq!(f.tls_stream_fwd.data, b"hello");
    assert_eq!(f.tls_stream_bwd.data, b"world!");
    assert_eq!(f.end_reason, EndReason::EndOfCapture);
    assert_eq!(f.duration(), Some(0.04));
}

#[test]
fn skipped_frames_are_counted() {
    let mut w = PcapWriter::new(Vec::new(), LinkType::Ethernet).unwrap();
    let mut arp = vec![0xffu8; 12];
    arp.extend_from_slice(&[0x08, 0x06]);
    arp.extend_from_slice(&[0; 28]);
    w.write_packet(Timestamp::from_micros(1), &arp).unwrap();
    let udp = ethernet_frame(ip("10.0.0.1"), ip("10.0.0.2"), L4::udp(1, 2), b"x");
    w.write_packet(Timestamp::from_micros(2), &udp).unwrap();
    let a = assemble_bytes(&w.into_inner(), &FlowConfig::default());
    assert_eq!((a.frames, a.decoded), (2, 1));
    assert_eq!(a.skipped.values().sum::<u64>(), 1);
    assert_eq!(a.flows.len(), 1);
}
