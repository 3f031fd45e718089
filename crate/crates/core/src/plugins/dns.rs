//! DNS message parsing (RFC 1035 wire format) and DNS flow features.

use super::stats::Summary;
use super::{FeatureRecord, FeatureValue, Plugin, Shape};
use crate::flow::BiFlow;

pub const TYPE_A: u16 = 1;
pub const TYPE_CNAME: u16 = 5;
pub const TYPE_AAAA: u16 = 28;

// Bounds the work done on hostile compression-pointer chains.
const MAX_POINTER_HOPS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DnsError {
    #[error("message shorter than the 12-byte header")]
    ShortHeader,
    #[error("truncated at offset {0}")]
    Truncated(usize),
    #[error("bad label at offset {0}")]
    BadLabel(usize),
    #[error("compression pointer loop")]
    PointerLoop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub name: String,
    pub qtype: u16,
    pub qclass: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceRecord {
    pub name: String,
    pub rtype: u16,
    pub class: u16,
    pub ttl: u32,
    pub rdata: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsMessage {
    pub id: u16,
    pub is_response: bool,
    pub rcode: u8,
    pub questions: Vec<Question>,
    pub answers: Vec<ResourceRecord>,
}

struct Cursor<'a> {
    msg: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DnsError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.msg.len());
        let end = end.ok_or(DnsError::Truncated(self.at))?;
        let out = &self.msg[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, DnsError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DnsError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn name(&mut self) -> Result<String, DnsError> {
        let (name, next) = read_name(self.msg, self.at)?;
        self.at = next;
        Ok(name)
    }
}

/// Reads a possibly compressed name starting at `at`; returns the dotted
/// name (no trailing dot, empty for the root) and the offset after it.
fn read_name(msg: &[u8], mut at: usize) -> Result<(String, usize), DnsError> {
    let mut labels: Vec<String> = Vec::new();
    let mut resume = None;
    let mut hops = 0;
    loop {
        let len = *msg.get(at).ok_or(DnsError::Truncated(at))?;
        match len & 0xc0 {
            0x00 => {
                if len == 0 {
                    at += 1;
                    break;
                }
                let start = at + 1;
                let end = start + usize::from(len);
                let label = msg.get(start..end).ok_or(DnsError::Truncated(start))?;
                labels.push(String::from_utf8_lossy(label).into_owned());
                at = end;
            }
            0xc0 => {
                let lo = *msg.get(at + 1).ok_or(DnsError::Truncated(at))?;
                hops += 1;
                if hops > MAX_POINTER_HOPS {
                    return Err(DnsError::PointerLoop);
                }
                resume.get_or_insert(at + 2);
                at = (usize::from(len & 0x3f) << 8) | usize::from(lo);
            }
            _ => return Err(DnsError::BadLabel(at)),
        }
    }
    Ok((labels.join("."), resume.unwrap_or(at)))
}

/// Parses the header, question and answer sections of one message.
pub fn parse_message(msg: &[u8]) -> Result<DnsMessage, DnsError> {
    if msg.len() < 12 {
        return Err(DnsError::ShortHeader);
    }
    let mut c = Cursor { msg, at: 0 };
    let id = c.u16()?;
    let flags = c.u16()?;
    let qdcount = c.u16()?;
    let ancount = c.u16()?;
    c.take(4)?;

    let mut questions = Vec::with_capacity(usize::from(qdcount).min(64));
    for _ in 0..qdcount {
        let name = c.name()?;
        let qtype = c.u16()?;
        let qclass = c.u16()?;
        questions.push(Question { name, qtype, qclass });
    }
    let mut answers = Vec::with_capacity(usize::from(ancount).min(64));
    for _ in 0..ancount {
        let name = c.name()?;
        let rtype = c.u16()?;
        let class = c.u16()?;
        let ttl = c.u32()?;
        let rdlen = usize::from(c.u16()?);
        let rdata = c.take(rdlen)?.to_vec();
        answers.push(ResourceRecord {
            name,
            rtype,
            class,
            ttl,
            rdata,
        });
    }
    Ok(DnsMessage {
        id,
        is_response: flags & 0x8000 != 0,
        rcode: (flags & 0x000f) as u8,
        questions,
        answers,
    })
}

pub(crate) const NAMES: [&str; 14] = [
    "dns_queries",
    "dns_answers",
    "dns_a",
    "dns_aaaa",
    "dns_cname",
    "dns_ttl_min",
    "dns_ttl_max",
    "dns_ttl_mean",
    "dns_qname_len",
    "dns_qname_digits",
    "dns_qname_hyphens",
    "dns_qname_dots",
    "dns_rcode",
    "dns_malformed",
];

/// DNS features over every message of a port-53 flow.
///
/// Counts are summed across messages, TTLs pooled over all answers, name
/// statistics taken from the first question seen and the response code from
/// the first response. Unparseable messages are counted in `dns_malformed`.
/// Flows not on port 53 get an all-missing record.
pub fn dns_features(flow: &BiFlow) -> FeatureRecord {
    let names = NAMES.map(String::from).to_vec();
    if !flow.is_dns() {
        return FeatureRecord::flat("dns", names, vec![FeatureValue::Missing; NAMES.len()]);
    }
    let mut queries = 0u64;
    let mut answers = 0u64;
    let mut by_type = [0u64; 3];
    let mut ttls: Vec<f64> = Vec::new();
    let mut qname: Option<String> = None;
    let mut rcode: Option<u8> = None;
    let mut malformed = 0u64;

    for payload in &flow.dns_payloads {
        let msg = match parse_message(payload) {
            Ok(m) => m,
            Err(_) => {
                malformed += 1;
                continue;
            }
        };
        if msg.is_response {
            rcode.get_or_insert(msg.rcode);
        } else {
            queries += 1;
        }
        if qname.is_none() {
            qname = msg.questions.first().map(|q| q.name.clone());
        }
        for rr in &msg.answers {
            answers += 1;
            match rr.rtype {
                TYPE_A => by_type[0] += 1,
                TYPE_AAAA => by_type[1] += 1,
                TYPE_CNAME => by_type[2] += 1,
                _ => {}
            }
            ttls.push(f64::from(rr.ttl));
        }
    }

    let ttl = Summary::of(&ttls);
    let count = |pred: fn(char) -> bool| qname.as_ref().map(|n| n.chars().filter(|&c| pred(c)).count() as f64);
    let values = vec![
        FeatureValue::Number(queries as f64),
        FeatureValue::Number(answers as f64),
        FeatureValue::Number(by_type[0] as f64),
        FeatureValue::Number(by_type[1] as f64),
        FeatureValue::Number(by_type[2] as f64),
        ttl.map(|s| s.min).into(),
        ttl.map(|s| s.max).into(),
        ttl.map(|s| s.mean).into(),
        qname.as_ref().map(|n| n.len() as f64).into(),
        count(|c| c.is_ascii_digit()).into(),
        count(|c| c == '-').into(),
        count(|c| c == '.').into(),
        rcode.map(f64::from).into(),
        FeatureValue::Number(malformed as f64),
    ];
    FeatureRecord::flat("dns", names, values)
}

pub(crate) struct Dns;

impl Plugin for Dns {
    fn name(&self) -> &str {
        "dns"
    }
    fn shape(&self) -> Shape {
        Shape::Flat(NAMES.len())
    }
    fn feature_names(&self) -> Vec<String> {
        NAMES.map(String::from).to_vec()
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        dns_features(flow)
    }
}
