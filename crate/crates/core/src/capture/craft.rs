//! Builders for synthetic frames.
//!
//! IPv4 or IPv6 is chosen from the address family; both addresses must be of
//! the same family. Checksums are left zero.

use std::net::IpAddr;

use super::{PROTO_TCP, PROTO_UDP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L4 {
    Tcp {
        src_port: u16,
        dst_port: u16,
        seq: u32,
        ack: u32,
        flags: u8,
        window: u16,
    },
    Udp {
        src_port: u16,
        dst_port: u16,
    },
    /// Any other IP protocol; the payload directly follows the IP header.
    Raw(u8),
}

impl L4 {
    pub fn tcp(src_port: u16, dst_port: u16, seq: u32, flags: u8) -> Self {
        L4::Tcp {
            src_port,
            dst_port,
            seq,
            ack: 0,
            flags,
            window: 65535,
        }
    }

    pub fn udp(src_port: u16, dst_port: u16) -> Self {
        L4::Udp { src_port, dst_port }
    }

    fn protocol(self) -> u8 {
        match self {
            L4::Tcp { .. } => PROTO_TCP,
            L4::Udp { .. } => PROTO_UDP,
            L4::Raw(p) => p,
        }
    }
}

fn transport_bytes(l4: L4, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + payload.len());
    match l4 {
        L4::Tcp {
            src_port,
            dst_port,
            seq,
            ack,
            flags,
            window,
        } => {
            out.extend_from_slice(&src_port.to_be_bytes());
            out.extend_from_slice(&dst_port.to_be_bytes());
            out.extend_from_slice(&seq.to_be_bytes());
            out.extend_from_slice(&ack.to_be_bytes());
            out.push(5 << 4);
            out.push(flags);
            out.extend_from_slice(&window.to_be_bytes());
            out.extend_from_slice(&[0, 0, 0, 0]);
        }
        L4::Udp { src_port, dst_port } => {
            out.extend_from_slice(&src_port.to_be_bytes());
            out.extend_from_slice(&dst_port.to_be_bytes());
            out.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
            out.extend_from_slice(&[0, 0]);
        }
        L4::Raw(_) => {}
    }
    out.extend_from_slice(payload);
    out
}

/// An IP packet (no link-layer header).
///
/// Panics if the address families differ.
pub fn ip_packet(src: IpAddr, dst: IpAddr, l4: L4, payload: &[u8]) -> Vec<u8> {
    let body = transport_bytes(l4, payload);
    let mut out = Vec::with_capacity(40 + body.len());
    match (src, dst) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            out.extend_from_slice(&[0x45, 0x00]);
            out.extend_from_slice(&((20 + body.len()) as u16).to_be_bytes());
            out.extend_from_slice(&[0x00, 0x00, 0x40, 0x00, 64, l4.protocol(), 0x00, 0x00]);
            out.extend_from_slice(&s.octets());
            out.extend_from_slice(&d.octets());
        }
        (IpAddr::V6(s), IpAddr::V6(d)) => {
            out.extend_from_slice(&[0x60, 0, 0, 0]);
            out.extend_from_slice(&(body.len() as u16).to_be_bytes());
            out.push(l4.protocol());
            out.push(64);
            out.extend_from_slice(&s.octets());
            out.extend_from_slice(&d.octets());
        }
        _ => panic!("mixed address families: {src} -> {dst}"),
    }
    out.extend_from_slice(&body);
    out
}

/// An Ethernet II frame carrying [`ip_packet`].
pub fn ethernet_frame(src: IpAddr, dst: IpAddr, l4: L4, payload: &[u8]) -> Vec<u8> {
    let ethertype: u16 = if src.is_ipv4() { 0x0800 } else { 0x86dd };
    let mut out = vec![0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, 0x01];
    out.extend_from_slice(&ethertype.to_be_bytes());
    out.extend_from_slice(&ip_packet(src, dst, l4, payload));
    out
}
