#![allow(dead_code)]

use std::io::Cursor;
use std::net::{IpAddr, Ipv4Addr};

use flowfeat::capture::craft::{ethernet_frame, L4};
use flowfeat::capture::writer::PcapWriter;
use flowfeat::capture::{CaptureReader, LinkType, TcpFlags, Timestamp, PROTO_TCP, PROTO_UDP};
use flowfeat::flow::{
    assemble, Assembly, BiFlow, ByteStream, Direction, EndReason, Endpoint, FlowConfig, FlowKey, PacketRecord, TcpState,
};
use rand::rngs::StdRng;
use rand::Rng;

/// A flow built directly from `(direction, rel_time, ip_size, payload)`.
pub fn make_flow(tcp: bool, packets: Vec<(Direction, f64, u32, Vec<u8>)>) -> BiFlow {
    let a = IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1));
    let b = IpAddr::V4(Ipv4Addr::new(10, 0, 0, 2));
    let records: Vec<PacketRecord> = packets
        .into_iter()
        .map(|(direction, rel_time, ip_size, payload)| PacketRecord {
            rel_time,
            direction,
            ip_size,
            payload_size: payload.len() as u32,
            payload,
            tcp_window: tcp.then_some(1024),
            tcp_flags: tcp.then_some(TcpFlags(TcpFlags::ACK)),
        })
        .collect();
    let last = records.last().map_or(0.0, |p| p.rel_time);
    BiFlow {
        key: FlowKey {
            ip_lo: a,
            ip_hi: b,
            port_lo: 40000,
            port_hi: 443,
            protocol: if tcp { PROTO_TCP } else { PROTO_UDP },
        },
        initiator: Endpoint { ip: a, port: 40000 },
        packets: records,
        first_ts: Timestamp(1_000_000),
        last_ts: Timestamp(1_000_000 + (last * 1e6) as u64),
        tcp_state: TcpState::default(),
        source_file: "synthetic.pcap".into(),
        end_reason: EndReason::EndOfCapture,
        dns_payloads: Vec::new(),
        tls_stream_fwd: ByteStream::default(),
        tls_stream_bwd: ByteStream::default(),
    }
}

/// Random flow with `0..=max_packets` packets; payloads are sometimes empty.
pub fn random_flow(rng: &mut StdRng, max_packets: usize) -> BiFlow {
    let n = rng.random_range(0..=max_packets);
    let mut t = 0.0;
    let packets = (0..n)
        .map(|i| {
            if i > 0 {
                t += rng.random_range(0.0..30.0);
            }
            let dir = if i == 0 || rng.random_bool(0.5) {
                Direction::Forward
            } else {
                Direction::Backward
            };
            let len = if rng.random_bool(0.2) {
                0
            } else {
                rng.random_range(0..1500)
            };
            let mut payload = vec![0u8; len];
            rng.fill(&mut payload[..]);
            let ip_size = 40 + len as u32;
            (dir, t, ip_size, payload)
        })
        .collect();
    make_flow(rng.random_bool(0.5), packets)
}

/// Ethernet PCAP with `packets` frames spread over `tuples` interleaved
/// client/server pairs, a mix of TCP and UDP.
pub fn synthetic_capture(rng: &mut StdRng, packets: usize, tuples: usize) -> Vec<u8> {
    let endpoints: Vec<(IpAddr, IpAddr, u16, u16, bool)> = (0..tuples)
        .map(|i| {
            let client = IpAddr::V4(Ipv4Addr::new(10, 1, (i / 250) as u8, (i % 250) as u8 + 1));
            let server = IpAddr::V4(Ipv4Addr::new(192, 0, 2, rng.random_range(1..20)));
            (
                client,
                server,
                1024 + i as u16,
                rng.random_range(1..1024),
                rng.random_bool(0.6),
            )
        })
        .collect();
    let mut w = PcapWriter::new(Vec::new(), LinkType::Ethernet).unwrap();
    let mut ts = 1_600_000_000_000_000u64;
    for _ in 0..packets {
        ts += rng.random_range(0..400_000);
        let (client, server, cport, sport, tcp) = endpoints[rng.random_range(0..tuples)];
        let forward = rng.random_bool(0.55);
        let (src, dst, sp, dp) = if forward {
            (client, server, cport, sport)
        } else {
            (server, client, sport, cport)
        };
        let mut payload = vec![0u8; rng.random_range(0..200)];
        rng.fill(&mut payload[..]);
        let l4 = if tcp {
            let flags = match rng.random_range(0..20) {
                0 => TcpFlags::SYN,
                1 => TcpFlags::FIN | TcpFlags::ACK,
                2 => TcpFlags::RST,
                _ => TcpFlags::ACK | TcpFlags::PSH,
            };
            L4::tcp(sp, dp, rng.random(), flags)
        } else {
            L4::udp(sp, dp)
        };
        w.write_packet(Timestamp(ts), &ethernet_frame(src, dst, l4, &payload))
            .unwrap();
    }
    w.into_inner()
}

pub fn assemble_bytes(bytes: &[u8], config: &FlowConfig) -> Assembly {
    let reader = CaptureReader::new(Cursor::new(bytes)).expect("valid capture header");
    assemble(reader, config, "synthetic.pcap")
}

/// Canonical text of a flow list for byte-identity checks.
pub fn flows_digest(flows: &[BiFlow]) -> String {
    flows.iter().map(|f| format!("{f:?}\n")).collect()
}

/// Relative comparison with an absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}
