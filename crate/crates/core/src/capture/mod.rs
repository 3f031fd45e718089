//! Capture file ingestion.
//!
//! [`CaptureReader`] streams raw frames out of classic PCAP (either byte
//! order, microsecond or nanosecond timestamps) and PCAPNG files (section
//! header, interface description and enhanced packet blocks). Each frame is
//! turned into a [`DecodedPacket`] by [`decode_packet`], which never fails
//! hard: anything it cannot or should not decode comes back as a
//! [`SkipReason`].
//!
//! [`writer`] and [`craft`] produce well-formed capture files and frames and
//! are used to build test fixtures.

pub mod craft;
mod decode;
mod reader;
pub mod writer;

use std::fmt;
use std::net::IpAddr;
use std::path::PathBuf;

pub use decode::decode_packet;
pub use reader::{open_capture, CaptureFormat, CaptureReader, Frame};

pub const PROTO_ICMP: u8 = 1;
pub const PROTO_IGMP: u8 = 2;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;
pub const PROTO_ICMPV6: u8 = 58;

/// Capture timestamp in microseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn from_micros(micros: u64) -> Self {
        Timestamp(micros)
    }

    pub fn from_secs_micros(secs: u64, micros: u64) -> Self {
        Timestamp(secs * 1_000_000 + micros)
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Seconds elapsed from `earlier` to `self`, saturating at zero.
    pub fn secs_since(self, earlier: Timestamp) -> f64 {
        self.0.saturating_sub(earlier.0) as f64 / 1e6
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// Link-layer header types understood by the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkType {
    Ethernet,
    /// Raw IP, version taken from the first nibble.
    RawIp,
    RawIpv4,
    RawIpv6,
    LinuxSll,
    LinuxSll2,
    Other(u32),
}

impl LinkType {
    pub fn from_code(code: u32) -> Self {
        match code {
            1 => LinkType::Ethernet,
            101 | 12 | 14 => LinkType::RawIp,
            228 => LinkType::RawIpv4,
            229 => LinkType::RawIpv6,
            113 => LinkType::LinuxSll,
            276 => LinkType::LinuxSll2,
            other => LinkType::Other(other),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            LinkType::Ethernet => 1,
            LinkType::RawIp => 101,
            LinkType::RawIpv4 => 228,
            LinkType::RawIpv6 => 229,
            LinkType::LinuxSll => 113,
            LinkType::LinuxSll2 => 276,
            LinkType::Other(code) => code,
        }
    }
}

/// TCP header flag bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TcpFlags(pub u8);

impl TcpFlags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;

    pub fn has(self, bit: u8) -> bool {
        self.0 & bit != 0
    }

    pub fn syn(self) -> bool {
        self.has(Self::SYN)
    }

    pub fn ack(self) -> bool {
        self.has(Self::ACK)
    }

    pub fn fin(self) -> bool {
        self.has(Self::FIN)
    }

    pub fn rst(self) -> bool {
        self.has(Self::RST)
    }
}

/// One captured packet decoded down to its transport payload.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPacket {
    pub timestamp: Timestamp,
    pub link_type: LinkType,
    pub ip_version: u8,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub ip_protocol: u8,
    /// IPv4 total length, or 40 + payload length for IPv6.
    pub ip_total_length: u32,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    pub tcp_flags: Option<TcpFlags>,
    pub tcp_window: Option<u16>,
    pub tcp_seq: Option<u32>,
    pub payload: Vec<u8>,
}

impl DecodedPacket {
    pub fn is_tcp(&self) -> bool {
        self.ip_protocol == PROTO_TCP
    }
}

/// Why a frame produced no [`DecodedPacket`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    NonIp,
    UnsupportedLinkType(u32),
    /// Non-initial IP fragment.
    Fragment,
    Malformed(&'static str),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::NonIp => f.write_str("non-IP frame"),
            SkipReason::UnsupportedLinkType(code) => write!(f, "unsupported link type {code}"),
            SkipReason::Fragment => f.write_str("non-initial IP fragment"),
            SkipReason::Malformed(what) => write!(f, "malformed: {what}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("read error: {0}")]
    Read(#[from] std::io::Error),
    #[error("unknown capture magic {0:#010x}")]
    UnknownMagic(u32),
    #[error("file too short for a capture header")]
    ShortHeader,
    #[error("truncated record at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error("malformed record at byte offset {offset}: {reason}")]
    Malformed { offset: u64, reason: &'static str },
    #[error("packet references undeclared interface {0}")]
    UnknownInterface(u32),
}

impl CaptureError {
    /// Truncation ends the stream but leaves every earlier packet valid.
    pub fn is_recoverable(&self) -> bool {
        matches!(self, CaptureError::Truncated { .. })
    }
}
