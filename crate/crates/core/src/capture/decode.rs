use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use super::{DecodedPacket, LinkType, SkipReason, TcpFlags, Timestamp, PROTO_TCP, PROTO_UDP};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88a8;
const ETHERTYPE_QINQ_OLD: u16 = 0x9100;

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes one captured frame. Never panics; undecodable input yields a
/// [`SkipReason`].
pub fn decode_packet(raw: &[u8], link_type: LinkType, timestamp: Timestamp) -> Result<DecodedPacket, SkipReason> {
    let (ethertype, l3) = match link_type {
        LinkType::Ethernet => ethernet(raw)?,
        LinkType::LinuxSll => {
            if raw.len() < 16 {
                return Err(SkipReason::Malformed("short cooked header"));
            }
            (be16(raw, 14), &raw[16..])
        }
        LinkType::LinuxSll2 => {
            if raw.len() < 20 {
                return Err(SkipReason::Malformed("short cooked header"));
            }
            (be16(raw, 0), &raw[20..])
        }
        LinkType::RawIp => match raw.first().map(|b| b >> 4) {
            Some(4) => (ETHERTYPE_IPV4, raw),
            Some(6) => (ETHERTYPE_IPV6, raw),
            Some(_) => return Err(SkipReason::NonIp),
            None => return Err(SkipReason::Malformed("empty frame")),
        },
        LinkType::RawIpv4 => (ETHERTYPE_IPV4, raw),
        LinkType::RawIpv6 => (ETHERTYPE_IPV6, raw),
        LinkType::Other(code) => return Err(SkipReason::UnsupportedLinkType(code)),
    };

    let ip = match ethertype {
        ETHERTYPE_IPV4 => ipv4(l3)?,
        ETHERTYPE_IPV6 => ipv6(l3)?,
        _ => return Err(SkipReason::NonIp),
    };
    transport(ip, link_type, timestamp)
}

fn ethernet(raw: &[u8]) -> Result<(u16, &[u8]), SkipReason> {
    if raw.len() < 14 {
        return Err(SkipReason::Malformed("short ethernet header"));
    }
    let mut ethertype = be16(raw, 12);
    let mut at = 14;
    while matches!(ethertype, ETHERTYPE_VLAN | ETHERTYPE_QINQ | ETHERTYPE_QINQ_OLD) {
        if raw.len() < at + 4 {
            return Err(SkipReason::Malformed("short vlan tag"));
        }
        ethertype = be16(raw, at + 2);
        at += 4;
    }
    Ok((ethertype, &raw[at..]))
}

struct IpLayer<'a> {
    version: u8,
    src: IpAddr,
    dst: IpAddr,
    protocol: u8,
    total_length: u32,
    /// Transport header and payload as captured, clipped to the IP length.
    body: &'a [u8],
}

fn ipv4(b: &[u8]) -> Result<IpLayer<'_>, SkipReason> {
    if b.len() < 20 {
        return Err(SkipReason::Malformed("short ipv4 header"));
    }
    if b[0] >> 4 != 4 {
        return Err(SkipReason::Malformed("ipv4 version mismatch"));
    }
    let header_len = usize::from(b[0] & 0x0f) * 4;
    if header_len < 20 || b.len() < header_len {
        return Err(SkipReason::Malformed("bad ipv4 header length"));
    }
    let declared = usize::from(be16(b, 2));
    // zero total length shows up with segmentation offload; trust the capture
    let total = if declared == 0 { b.len() } else { declared };
    if total < header_len {
        return Err(SkipReason::Malformed("ipv4 total length below header length"));
    }
    if be16(b, 6) & 0x1fff != 0 {
        return Err(SkipReason::Fragment);
    }
    let end = total.min(b.len());
    Ok(IpLayer {
        version: 4,
        src: IpAddr::V4(Ipv4Addr::new(b[12], b[13], b[14], b[15])),
        dst: IpAddr::V4(Ipv4Addr::new(b[16], b[17], b[18], b[19])),
        protocol: b[9],
        total_length: total as u32,
        body: &b[header_len..end],
    })
}

fn ipv6(b: &[u8]) -> Result<IpLayer<'_>, SkipReason> {
    if b.len() < 40 {
        return Err(SkipReason::Malformed("short ipv6 header"));
    }
    if b[0] >> 4 != 6 {
        return Err(SkipReason::Malformed("ipv6 version mismatch"));
    }
    let declared = usize::from(be16(b, 4));
    let payload_len = if declared == 0 { b.len() - 40 } else { declared };
    let end = (40 + payload_len).min(b.len());
    let mut src = [0u8; 16];
    let mut dst = [0u8; 16];
    src.copy_from_slice(&b[8..24]);
    dst.copy_from_slice(&b[24..40]);

    let mut next = b[6];
    let mut at = 40;
    loop {
        let ext_len = match next {
            0 | 43 | 60 => {
                if end < at + 2 {
                    return Err(SkipReason::Malformed("short ipv6 extension header"));
                }
                (usize::from(b[at + 1]) + 1) * 8
            }
            44 => {
                if end < at + 8 {
                    return Err(SkipReason::Malformed("short ipv6 fragment header"));
                }
                if be16(b, at + 2) >> 3 != 0 {
                    return Err(SkipReason::Fragment);
                }
                8
            }
            51 => {
                if end < at + 2 {
                    return Err(SkipReason::Malformed("short ipv6 authentication header"));
                }
                (usize::from(b[at + 1]) + 2) * 4
            }
            _ => break,
        };
        if end < at + ext_len {
            return Err(SkipReason::Malformed("ipv6 extension header overruns packet"));
        }
        next = b[at];
        at += ext_len;
    }

    Ok(IpLayer {
        version: 6,
        src: IpAddr::V6(Ipv6Addr::from(src)),
        dst: IpAddr::V6(Ipv6Addr::from(dst)),
        protocol: next,
        total_length: (40 + payload_len) as u32,
        body: &b[at..end],
    })
}

fn transport(ip: IpLayer<'_>, link_type: LinkType, timestamp: Timestamp) -> Result<DecodedPacket, SkipReason> {
    let mut pkt = DecodedPacket {
        timestamp,
        link_type,
        ip_version: ip.version,
        src_ip: ip.src,
        dst_ip: ip.dst,
        ip_protocol: ip.protocol,
        ip_total_length: ip.total_length,
        src_port: None,
        dst_port: None,
        tcp_flags: None,
        tcp_window: None,
        tcp_seq: None,
        payload: Vec::new(),
    };
    let b = ip.body;
    match ip.protocol {
        PROTO_TCP => {
            if b.len() < 20 {
                return Err(SkipReason::Malformed("short tcp header"));
            }
            let header_len = usize::from(b[12] >> 4) * 4;
            if header_len < 20 || b.len() < header_len {
                return Err(SkipReason::Malformed("bad tcp data offset"));
            }
            pkt.src_port = Some(be16(b, 0));
            pkt.dst_port = Some(be16(b, 2));
            pkt.tcp_seq = Some(be32(b, 4));
            pkt.tcp_flags = Some(TcpFlags(b[13]));
            pkt.tcp_window = Some(be16(b, 14));
            pkt.payload = b[header_len..].to_vec();
        }
        PROTO_UDP => {
            if b.len() < 8 {
                return Err(SkipReason::Malformed("short udp header"));
            }
            pkt.src_port = Some(be16(b, 0));
            pkt.dst_port = Some(be16(b, 2));
            pkt.payload = b[8..].to_vec();
        }
        _ => pkt.payload = b.to_vec(),
    }
    Ok(pkt)
}
