use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::stream::{ByteStream, StreamBuilder};
use super::{canonical_key, BiFlow, Direction, EndReason, Endpoint, FlowKey, KeySide, PacketRecord, TcpState};
use crate::capture::{DecodedPacket, Timestamp, PROTO_TCP, PROTO_UDP};

/// Flow expiry and capacity settings. Times are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub idle_timeout: f64,
    pub active_timeout: f64,
    pub max_packets: usize,
    pub fin_linger: f64,
    /// Live flows kept before the oldest-idle one is evicted.
    pub max_flows: usize,
    /// Bytes of each TCP direction kept for TLS/DNS stream parsing.
    pub stream_limit: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            idle_timeout: 120.0,
            active_timeout: 1800.0,
            max_packets: 100_000,
            fin_linger: 5.0,
            max_flows: 1_000_000,
            stream_limit: 1 << 20,
        }
    }
}

fn secs_to_micros(secs: f64) -> u64 {
    if secs.is_finite() && secs > 0.0 {
        (secs * 1e6).round() as u64
    } else if secs.is_infinite() && secs > 0.0 {
        u64::MAX
    } else {
        0
    }
}

// How often (in capture time) all live flows are checked for expiry.
const SWEEP_INTERVAL_MICROS: u64 = 1_000_000;

struct LiveFlow {
    seq: u64,
    initiator_side: KeySide,
    initiator: Endpoint,
    first_ts: Timestamp,
    last_ts: Timestamp,
    packets: Vec<PacketRecord>,
    tcp_state: TcpState,
    fwd: StreamBuilder,
    bwd: StreamBuilder,
    fin_fwd: bool,
    fin_bwd: bool,
    closing_since: Option<Timestamp>,
}

/// Groups packets of one capture into bidirectional flows.
///
/// Single writer: feed packets in capture order with [`FlowTable::ingest`]
/// and call [`FlowTable::flush`] at the end of the capture.
pub struct FlowTable {
    idle: u64,
    active: u64,
    linger: u64,
    max_packets: usize,
    max_flows: usize,
    stream_limit: usize,
    source: PathBuf,
    flows: HashMap<FlowKey, LiveFlow>,
    next_seq: u64,
    last_sweep: Option<Timestamp>,
    ingested: u64,
}

impl FlowTable {
    pub fn new(config: &FlowConfig, source: impl Into<PathBuf>) -> Self {
        FlowTable {
            idle: secs_to_micros(config.idle_timeout),
            active: secs_to_micros(config.active_timeout),
            linger: secs_to_micros(config.fin_linger),
            max_packets: config.max_packets.max(1),
            max_flows: config.max_flows.max(1),
            stream_limit: config.stream_limit,
            source: source.into(),
            flows: HashMap::new(),
            next_seq: 0,
            last_sweep: None,
            ingested: 0,
        }
    }

    pub fn live_flows(&self) -> usize {
        self.flows.len()
    }

    pub fn ingested(&self) -> u64 {
        self.ingested
    }

    /// Adds one packet; returns the flows that completed as a result, in a
    /// deterministic order.
    pub fn ingest(&mut self, pkt: DecodedPacket) -> Vec<BiFlow> {
        self.ingested += 1;
        let now = pkt.timestamp;
        let mut done = Vec::new();

        if self
            .last_sweep
            .is_none_or(|t| now.0.saturating_sub(t.0) >= SWEEP_INTERVAL_MICROS)
        {
            self.last_sweep = Some(now);
            self.sweep(now, &mut done);
        }

        let (key, side) = canonical_key(&pkt);
        if let Some(reason) = self.flows.get(&key).and_then(|f| self.expiry(f, now)) {
            let live = self.flows.remove(&key).expect("flow present");
            done.push(self.finish(key, live, reason));
        }

        if !self.flows.contains_key(&key) {
            if self.flows.len() >= self.max_flows {
                self.evict_one(&mut done);
            }
            let seq = self.next_seq;
            self.next_seq += 1;
            self.flows.insert(
                key,
                LiveFlow {
                    seq,
                    initiator_side: side,
                    initiator: Endpoint {
                        ip: pkt.src_ip,
                        port: pkt.src_port.unwrap_or(0),
                    },
                    first_ts: now,
                    last_ts: now,
                    packets: Vec::new(),
                    tcp_state: TcpState::default(),
                    fwd: StreamBuilder::new(self.stream_limit),
                    bwd: StreamBuilder::new(self.stream_limit),
                    fin_fwd: false,
                    fin_bwd: false,
                    closing_since: None,
                },
            );
        }

        let live = self.flows.get_mut(&key).expect("flow present");
        append(live, pkt, side);
        if live.packets.len() >= self.max_packets {
            let live = self.flows.remove(&key).expect("flow present");
            done.push(self.finish(key, live, EndReason::PacketLimit));
        }
        done
    }

    /// Emits every live flow, ordered by first timestamp.
    pub fn flush(&mut self) -> Vec<BiFlow> {
        let mut live: Vec<(FlowKey, LiveFlow)> = self.flows.drain().collect();
        live.sort_by_key(|(_, f)| (f.first_ts, f.seq));
        live.into_iter()
            .map(|(key, f)| self.finish(key, f, EndReason::EndOfCapture))
            .collect()
    }

    fn expiry(&self, flow: &LiveFlow, now: Timestamp) -> Option<EndReason> {
        if let Some(since) = flow.closing_since {
            if now.0.saturating_sub(since.0) > self.linger {
                return Some(EndReason::Closed);
            }
        }
        if now.0.saturating_sub(flow.last_ts.0) > self.idle {
            return Some(EndReason::IdleTimeout);
        }
        if now.0.saturating_sub(flow.first_ts.0) > self.active {
            return Some(EndReason::ActiveTimeout);
        }
        None
    }

    fn sweep(&mut self, now: Timestamp, done: &mut Vec<BiFlow>) {
        let mut expired: Vec<(u64, Timestamp, FlowKey, EndReason)> = self
            .flows
            .iter()
            .filter_map(|(k, f)| self.expiry(f, now).map(|r| (f.seq, f.first_ts, *k, r)))
            .collect();
        expired.sort_by_key(|&(seq, first, _, _)| (first, seq));
        for (_, _, key, reason) in expired {
            let live = self.flows.remove(&key).expect("flow present");
            done.push(self.finish(key, live, reason));
        }
    }

    fn evict_one(&mut self, done: &mut Vec<BiFlow>) {
        let victim = self
            .flows
            .iter()
            .min_by_key(|(_, f)| (f.last_ts, f.seq))
            .map(|(k, _)| *k);
        if let Some(key) = victim {
            let live = self.flows.remove(&key).expect("flow present");
            done.push(self.finish(key, live, EndReason::Evicted));
        }
    }

    fn finish(&self, key: FlowKey, live: LiveFlow, end_reason: EndReason) -> BiFlow {
        let payload_of = |i: usize| live.packets[i].payload.as_slice();
        let (fwd, bwd) = if key.protocol == PROTO_TCP {
            (live.fwd.build(payload_of), live.bwd.build(payload_of))
        } else {
            (ByteStream::default(), ByteStream::default())
        };
        let is_dns = key.port_lo == 53 || key.port_hi == 53;
        let dns_payloads = if !is_dns {
            Vec::new()
        } else if key.protocol == PROTO_UDP {
            live.packets
                .iter()
                .filter(|p| !p.payload.is_empty())
                .map(|p| p.payload.clone())
                .collect()
        } else if key.protocol == PROTO_TCP {
            dns_over_tcp(&fwd, &bwd)
        } else {
            Vec::new()
        };

        BiFlow {
            key,
            initiator: live.initiator,
            packets: live.packets,
            first_ts: live.first_ts,
            last_ts: live.last_ts,
            tcp_state: live.tcp_state,
            source_file: self.source.clone(),
            end_reason,
            dns_payloads,
            tls_stream_fwd: fwd,
            tls_stream_bwd: bwd,
        }
    }
}

fn append(live: &mut LiveFlow, pkt: DecodedPacket, side: KeySide) {
    let direction = if side == live.initiator_side {
        Direction::Forward
    } else {
        Direction::Backward
    };
    let index = live.packets.len();
    if pkt.timestamp > live.last_ts {
        live.last_ts = pkt.timestamp;
    }

    if let Some(flags) = pkt.tcp_flags {
        live.tcp_state.observe(direction, flags);
        let stream = match direction {
            Direction::Forward => &mut live.fwd,
            Direction::Backward => &mut live.bwd,
        };
        if let Some(seq) = pkt.tcp_seq {
            if flags.syn() {
                stream.observe_syn(seq);
            }
            stream.add(seq, pkt.payload.len(), index);
        }
        if flags.fin() {
            match direction {
                Direction::Forward => live.fin_fwd = true,
                Direction::Backward => live.fin_bwd = true,
            }
        }
        if live.closing_since.is_none() && (flags.rst() || (live.fin_fwd && live.fin_bwd)) {
            live.closing_since = Some(pkt.timestamp);
        }
    }

    live.packets.push(PacketRecord {
        rel_time: pkt.timestamp.secs_since(live.first_ts),
        direction,
        ip_size: pkt.ip_total_length,
        payload_size: pkt.payload.len() as u32,
        payload: pkt.payload,
        tcp_window: pkt.tcp_window,
        tcp_flags: pkt.tcp_flags,
    });
}

// DNS over TCP prefixes each message with a 2-byte length.
fn dns_over_tcp(fwd: &ByteStream, bwd: &ByteStream) -> Vec<Vec<u8>> {
    let mut messages: Vec<(usize, Vec<u8>)> = Vec::new();
    for stream in [fwd, bwd] {
        let data = &stream.data;
        let mut at = 0;
        while at + 2 <= data.len() {
            let len = usize::from(u16::from_be_bytes([data[at], data[at + 1]]));
            if len == 0 || at + 2 + len > data.len() {
                break;
            }
            let packet = stream.packet_at(at).unwrap_or(usize::MAX);
            messages.push((packet, data[at + 2..at + 2 + len].to_vec()));
            at += 2 + len;
        }
    }
    messages.sort_by_key(|(packet, _)| *packet);
    messages.into_iter().map(|(_, m)| m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{LinkType, TcpFlags};

    fn tcp(ts: u64, fwd: bool, flags: u8, seq: u32, payload: &[u8]) -> DecodedPacket {
        let (src, sport, dst, dport) = if fwd {
            ("10.0.0.1", 40000, "10.0.0.2", 443)
        } else {
            ("10.0.0.2", 443, "10.0.0.1", 40000)
        };
        DecodedPacket {
            timestamp: Timestamp(ts),
            link_type: LinkType::RawIp,
            ip_version: 4,
            src_ip: src.parse().unwrap(),
            dst_ip: dst.parse().unwrap(),
            ip_protocol: PROTO_TCP,
            ip_total_length: 40 + payload.len() as u32,
            src_port: Some(sport),
            dst_port: Some(dport),
            tcp_flags: Some(TcpFlags(flags)),
            tcp_window: Some(1000),
            tcp_seq: Some(seq),
            payload: payload.to_vec(),
        }
    }

    fn udp(ts: u64, sport: u16) -> DecodedPacket {
        DecodedPacket {
            timestamp: Timestamp(ts),
            link_type: LinkType::RawIp,
            ip_version: 4,
            src_ip: "10.0.0.1".parse().unwrap(),
            dst_ip: "10.0.0.3".parse().unwrap(),
            ip_protocol: PROTO_UDP,
            ip_total_length: 30,
            src_port: Some(sport),
            dst_port: Some(9999),
            tcp_flags: None,
            tcp_window: None,
            tcp_seq: None,
            payload: vec![1, 2],
        }
    }

    const SYN: u8 = TcpFlags::SYN;
    const SYNACK: u8 = TcpFlags::SYN | TcpFlags::ACK;
    const ACK: u8 = TcpFlags::ACK;
    const PSHACK: u8 = TcpFlags::PSH | TcpFlags::ACK;

    #[test]
    fn handshake_then_data() {
        let mut table = FlowTable::new(&FlowConfig::default(), "x.pcap");
        let mut out = Vec::new();
        out.extend(table.ingest(tcp(0, true, SYN, 100, b"")));
        out.extend(table.ingest(tcp(10, false, SYNACK, 500, b"")));
        out.extend(table.ingest(tcp(20, true, ACK, 101, b"")));
        out.extend(table.ingest(tcp(30, true, PSHACK, 101, b"GET")));
        assert!(out.is_empty());
        let flows = table.flush();
        assert_eq!(flows.len(), 1);
        let f = &flows[0];
        assert_eq!(f.packet_count(), 4);
        assert!(f.tcp_state.handshake_seen && f.tcp_state.syn_fwd && f.tcp_state.synack_bwd && f.tcp_state.ack_fwd);
        assert!(!f.is_unopened_tcp());
        assert_eq!(f.tls_stream_fwd.data, b"GET");
        assert_eq!(f.initiator.port, 40000);
        assert_eq!(f.responder().port, 443);
        assert_eq!(f.forward_count(), 3);
        assert_eq!(f.backward_count(), 1);
        assert_eq!(f.packets[3].rel_time, 30e-6);
        assert_eq!(f.end_reason, EndReason::EndOfCapture);
    }

    #[test]
    fn single_packet_idle_timeout() {
        let mut table = FlowTable::new(&FlowConfig::default(), "x.pcap");
        assert!(table.ingest(udp(0, 1)).is_empty());
        let out = table.ingest(udp(121_000_000, 2));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].packet_count(), 1);
        assert_eq!(out[0].duration(), None);
        assert_eq!(out[0].end_reason, EndReason::IdleTimeout);
    }

    #[test]
    fn same_tuple_after_idle_starts_new_flow() {
        let mut table = FlowTable::new(&FlowConfig::default(), "x.pcap");
        table.ingest(udp(0, 1));
        table.ingest(udp(500_000, 1));
        let out = table.ingest(udp(200_000_000, 1));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].packet_count(), 2);
        assert_eq!(out[0].duration(), Some(0.5));
        let rest = table.flush();
        assert_eq!(rest.len(), 1);
        assert_eq!(rest[0].packet_count(), 1);
    }

    #[test]
    fn interleaved_tuples() {
        let mut table = FlowTable::new(&FlowConfig::default(), "x.pcap");
        for i in 0..6u64 {
            assert!(table.ingest(udp(i * 1000, 1 + (i % 2) as u16)).is_empty());
        }
        let flows = table.flush();
        assert_eq!(flows.len(), 2);
        assert!(flows.iter().all(|f| f.packet_count() == 3));
        assert!(flows[0].first_ts < flows[1].first_ts);
    }

    #[test]
    fn active_timeout_splits_long_flows() {
        let config = FlowConfig {
            active_timeout: 10.0,
            ..FlowConfig::default()
        };
        let mut table = FlowTable::new(&config, "x.pcap");
        let mut out = Vec::new();
        for i in 0..25u64 {
            out.extend(table.ingest(udp(i * 1_000_000, 1)));
        }
        out.extend(table.flush());
        assert_eq!(
            out.iter().map(|f| f.packet_count()).collect::<Vec<_>>(),
            vec![11, 11, 3]
        );
        assert_eq!(out[0].end_reason, EndReason::ActiveTimeout);
    }

    #[test]
    fn fin_both_ways_then_linger() {
        let mut table = FlowTable::new(&FlowConfig::default(), "x.pcap");
        table.ingest(tcp(0, true, PSHACK, 1, b"a"));
        table.ingest(tcp(1_000, true, TcpFlags::FIN | ACK, 2, b""));
        table.ingest(tcp(2_000, false, TcpFlags::FIN | ACK, 9, b""));
        // final ACK inside the linger window stays in the flow
        assert!(table.ingest(tcp(3_000, true, ACK, 3, b"")).is_empty());
        let out = table.ingest(tcp(7_000_000, true, SYN, 50, b""));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].packet_count(), 4);
        assert_eq!(out[0].end_reason, EndReason::Closed);
        assert_eq!(table.flush()[0].packet_count(), 1);
    }

    #[test]
    fn rst_closes_after_linger() {
        let mut table = FlowTable::new(&FlowConfig::default(), "x.pcap");
        table.ingest(tcp(0, true, SYN, 1, b""));
        table.ingest(tcp(1_000, false, TcpFlags::RST | ACK, 0, b""));
        let out = table.ingest(udp(6_500_000, 7));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].end_reason, EndReason::Closed);
        assert!(out[0].is_unopened_tcp());
    }

    #[test]
    fn packet_cap_emits_immediately() {
        let config = FlowConfig {
            max_packets: 2,
            ..FlowConfig::default()
        };
        let mut table = FlowTable::new(&config, "x.pcap");
        assert!(table.ingest(udp(0, 1)).is_empty());
        let out = table.ingest(udp(1, 1));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].end_reason, EndReason::PacketLimit);
        assert_eq!(table.live_flows(), 0);
    }

    #[test]
    fn full_table_evicts_oldest_idle() {
        let config = FlowConfig {
            max_flows: 2,
            ..FlowConfig::default()
        };
        let mut table = FlowTable::new(&config, "x.pcap");
        table.ingest(udp(0, 1));
        table.ingest(udp(10, 2));
        table.ingest(udp(20, 1));
        let out = table.ingest(udp(30, 3));
        assert_eq!(out.len(), 1);
        assert!(out[0].evicted());
        assert_eq!(out[0].initiator.port, 2);
    }

    #[test]
    fn flush_of_empty_table() {
        let mut table = FlowTable::new(&FlowConfig::default(), "x.pcap");
        assert!(table.flush().is_empty());
    }

    #[test]
    fn dns_over_tcp_messages_are_split() {
        let mut table = FlowTable::new(&FlowConfig::default(), "x.pcap");
        let mut q = tcp(0, true, PSHACK, 10, &[0, 3, 1, 2, 3, 0, 2, 9, 9]);
        q.dst_port = Some(53);
        let mut r = tcp(10, false, PSHACK, 77, &[0, 1, 7]);
        r.src_port = Some(53);
        table.ingest(q);
        table.ingest(r);
        let flows = table.flush();
        assert_eq!(flows[0].dns_payloads, vec![vec![1, 2, 3], vec![9, 9], vec![7]]);
    }
}
