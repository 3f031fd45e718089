//! Bidirectional flow assembly.
//!
//! Packets are grouped on a direction-invariant 5-tuple ([`FlowKey`]). The
//! endpoint that sent the first observed packet of a flow is its initiator
//! and defines the forward direction for the flow's whole lifetime.

mod assemble;
mod stream;
mod table;

use std::fmt;
use std::net::IpAddr;
use std::path::PathBuf;

use crate::capture::{DecodedPacket, TcpFlags, Timestamp, PROTO_TCP};

pub use assemble::{assemble, assemble_with, Assembly};
pub use stream::{ByteStream, StreamSpan};
pub use table::{FlowConfig, FlowTable};

/// Canonically ordered 5-tuple; `(ip_lo, port_lo) <= (ip_hi, port_hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub ip_lo: IpAddr,
    pub ip_hi: IpAddr,
    pub port_lo: u16,
    pub port_hi: u16,
    pub protocol: u8,
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}<->{}:{}/{}",
            self.ip_lo, self.port_lo, self.ip_hi, self.port_hi, self.protocol
        )
    }
}

/// Which canonical endpoint of a [`FlowKey`] sent a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeySide {
    Lo,
    Hi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// +1 forward, -1 backward.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub ip: IpAddr,
    pub port: u16,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ip {
            IpAddr::V4(ip) => write!(f, "{ip}:{}", self.port),
            IpAddr::V6(ip) => write!(f, "[{ip}]:{}", self.port),
        }
    }
}

/// Maps a packet to its flow key. Portless protocols use port 0 on both sides.
pub fn canonical_key(pkt: &DecodedPacket) -> (FlowKey, KeySide) {
    let src = Endpoint {
        ip: pkt.src_ip,
        port: pkt.src_port.unwrap_or(0),
    };
    let dst = Endpoint {
        ip: pkt.dst_ip,
        port: pkt.dst_port.unwrap_or(0),
    };
    let (lo, hi, side) = if src <= dst {
        (src, dst, KeySide::Lo)
    } else {
        (dst, src, KeySide::Hi)
    };
    let key = FlowKey {
        ip_lo: lo.ip,
        ip_hi: hi.ip,
        port_lo: lo.port,
        port_hi: hi.port,
        protocol: pkt.ip_protocol,
    };
    (key, side)
}

/// One packet as seen from inside its flow.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    /// Seconds since the flow's first packet.
    pub rel_time: f64,
    pub direction: Direction,
    /// IP total length.
    pub ip_size: u32,
    pub payload_size: u32,
    pub payload: Vec<u8>,
    pub tcp_window: Option<u16>,
    pub tcp_flags: Option<TcpFlags>,
}

/// Progress of the three-way handshake, tracked in strict order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TcpState {
    pub handshake_seen: bool,
    pub syn_fwd: bool,
    pub synack_bwd: bool,
    pub ack_fwd: bool,
}

impl TcpState {
    pub(crate) fn observe(&mut self, direction: Direction, flags: TcpFlags) {
        match direction {
            Direction::Forward => {
                if flags.syn() && !flags.ack() && !self.synack_bwd {
                    self.syn_fwd = true;
                } else if self.synack_bwd
                    && !self.ack_fwd
                    && flags.ack()
                    && !flags.syn()
                    && !flags.fin()
                    && !flags.rst()
                {
                    self.ack_fwd = true;
                    self.handshake_seen = true;
                }
            }
            Direction::Backward => {
                if self.syn_fwd && !self.synack_bwd && flags.syn() && flags.ack() {
                    self.synack_bwd = true;
                }
            }
        }
    }
}

/// Why a flow left the flow table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndReason {
    IdleTimeout,
    ActiveTimeout,
    /// Both FINs or a RST, plus the linger period.
    Closed,
    PacketLimit,
    /// Pushed out because the table was full.
    Evicted,
    EndOfCapture,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EndReason::IdleTimeout => "idle",
            EndReason::ActiveTimeout => "active",
            EndReason::Closed => "closed",
            EndReason::PacketLimit => "packet_limit",
            EndReason::Evicted => "evicted",
            EndReason::EndOfCapture => "eof",
        }
    }
}

/// A completed bidirectional flow.
#[derive(Debug, Clone, PartialEq)]
pub struct BiFlow {
    pub key: FlowKey,
    pub initiator: Endpoint,
    /// Packets in global arrival order.
    pub packets: Vec<PacketRecord>,
    pub first_ts: Timestamp,
    pub last_ts: Timestamp,
    pub tcp_state: TcpState,
    pub source_file: PathBuf,
    pub end_reason: EndReason,
    /// DNS messages carried by the flow, in arrival order.
    pub dns_payloads: Vec<Vec<u8>>,
    /// In-order TCP byte stream of the initiator (empty for non-TCP flows).
    pub tls_stream_fwd: ByteStream,
    pub tls_stream_bwd: ByteStream,
}

impl BiFlow {
    pub fn protocol(&self) -> u8 {
        self.key.protocol
    }

    pub fn responder(&self) -> Endpoint {
        let lo = Endpoint {
            ip: self.key.ip_lo,
            port: self.key.port_lo,
        };
        let hi = Endpoint {
            ip: self.key.ip_hi,
            port: self.key.port_hi,
        };
        if self.initiator == lo {
            hi
        } else {
            lo
        }
    }

    pub fn packet_count(&self) -> usize {
        self.packets.len()
    }

    pub fn forward_count(&self) -> usize {
        self.packets
            .iter()
            .filter(|p| p.direction == Direction::Forward)
            .count()
    }

    pub fn backward_count(&self) -> usize {
        self.packet_count() - self.forward_count()
    }

    /// Seconds from first to last packet; needs at least two packets.
    pub fn duration(&self) -> Option<f64> {
        (self.packets.len() >= 2).then(|| self.last_ts.secs_since(self.first_ts))
    }

    /// TCP flow whose three-way handshake was not observed.
    pub fn is_unopened_tcp(&self) -> bool {
        self.key.protocol == PROTO_TCP && !self.tcp_state.handshake_seen
    }

    pub fn evicted(&self) -> bool {
        self.end_reason == EndReason::Evicted
    }

    pub fn is_dns(&self) -> bool {
        self.key.port_lo == 53 || self.key.port_hi == 53
    }
}
