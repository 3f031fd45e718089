//! TLS record-layer features and ClientHello fingerprinting.
//!
//! Record headers are read from each direction's reassembled TCP stream.
//! A flow counts as TLS when at least one direction carries data and every
//! direction that does starts with a plausible record header. The JA3 string
//! is `version,ciphers,extensions,groups,point_formats` in decimal with
//! `-` separators and GREASE values removed; its digest is the MD5 of that
//! string in lowercase hex.

use md5::{Digest, Md5};

use super::clumps::{clump_feature_names, clump_features, partition_clumps};
use super::stats::Summary;
use super::{FeatureRecord, FeatureValue, Plugin, Shape};
use crate::capture::PROTO_TCP;
use crate::flow::{BiFlow, ByteStream, Direction};

pub const CONTENT_CHANGE_CIPHER_SPEC: u8 = 20;
pub const CONTENT_ALERT: u8 = 21;
pub const CONTENT_HANDSHAKE: u8 = 22;
pub const CONTENT_APPLICATION_DATA: u8 = 23;
pub const CONTENT_HEARTBEAT: u8 = 24;

const HANDSHAKE_CLIENT_HELLO: u8 = 1;
const EXT_SERVER_NAME: u16 = 0;
const EXT_SUPPORTED_GROUPS: u16 = 10;
const EXT_EC_POINT_FORMATS: u16 = 11;
const EXT_SUPPORTED_VERSIONS: u16 = 43;

const MAX_RECORD_LEN: u16 = 16384 + 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TlsRecord {
    pub content_type: u8,
    pub version: u16,
    /// Length field of the header (body bytes, header excluded).
    pub length: u16,
    /// Offset of the header in the stream.
    pub offset: usize,
}

/// GREASE values (RFC 8701) used as cipher, extension, group or version.
pub fn is_grease(v: u16) -> bool {
    v & 0x0f0f == 0x0a0a && (v >> 8) == (v & 0xff)
}

pub fn plausible_header(b: &[u8]) -> bool {
    if b.len() < 5 {
        return false;
    }
    let length = u16::from_be_bytes([b[3], b[4]]);
    (CONTENT_CHANGE_CIPHER_SPEC..=CONTENT_HEARTBEAT).contains(&b[0])
        && b[1] == 3
        && b[2] <= 4
        && length <= MAX_RECORD_LEN
}

/// Record headers from the start of `stream`, stopping at the first
/// implausible or incomplete header. The last record's body may be cut off.
pub fn parse_records(stream: &[u8]) -> Vec<TlsRecord> {
    let mut out = Vec::new();
    let mut at = 0;
    while at + 5 <= stream.len() && plausible_header(&stream[at..]) {
        let length = u16::from_be_bytes([stream[at + 3], stream[at + 4]]);
        out.push(TlsRecord {
            content_type: stream[at],
            version: u16::from_be_bytes([stream[at + 1], stream[at + 2]]),
            length,
            offset: at,
        });
        at += 5 + usize::from(length);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClientHello {
    pub legacy_version: u16,
    pub cipher_suites: Vec<u16>,
    pub compression_methods: Vec<u8>,
    /// Extension types in offered order.
    pub extensions: Vec<u16>,
    pub sni: Option<String>,
    pub supported_groups: Vec<u16>,
    pub ec_point_formats: Vec<u8>,
    pub supported_versions: Vec<u16>,
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.0.len() < n {
            return None;
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Some(head)
    }
    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }
    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_be_bytes([b[0], b[1]]))
    }
    fn u24(&mut self) -> Option<usize> {
        self.take(3)
            .map(|b| (usize::from(b[0]) << 16) | (usize::from(b[1]) << 8) | usize::from(b[2]))
    }
    fn vec8(&mut self) -> Option<&'a [u8]> {
        let n = usize::from(self.u8()?);
        self.take(n)
    }
    fn vec16(&mut self) -> Option<&'a [u8]> {
        let n = usize::from(self.u16()?);
        self.take(n)
    }
}

fn u16_list(b: &[u8]) -> Vec<u16> {
    b.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
}

impl ClientHello {
    /// Parses a ClientHello from the leading handshake records of a client
    /// stream.
    pub fn from_stream(stream: &[u8]) -> Option<ClientHello> {
        let mut handshake = Vec::new();
        for rec in parse_records(stream) {
            if rec.content_type != CONTENT_HANDSHAKE {
                break;
            }
            let start = rec.offset + 5;
            let end = (start + usize::from(rec.length)).min(stream.len());
            handshake.extend_from_slice(&stream[start..end]);
            if end < start + usize::from(rec.length) {
                break;
            }
        }
        let mut r = Reader(&handshake);
        if r.u8()? != HANDSHAKE_CLIENT_HELLO {
            return None;
        }
        let len = r.u24()?;
        Self::parse_body(r.take(len)?)
    }

    fn parse_body(body: &[u8]) -> Option<ClientHello> {
        let mut r = Reader(body);
        let mut hello = ClientHello {
            legacy_version: r.u16()?,
            ..ClientHello::default()
        };
        r.take(32)?;
        r.vec8()?;
        hello.cipher_suites = u16_list(r.vec16()?);
        hello.compression_methods = r.vec8()?.to_vec();
        if r.0.is_empty() {
            return Some(hello);
        }
        let mut exts = Reader(r.vec16()?);
        while !exts.0.is_empty() {
            let ext_type = exts.u16()?;
            let data = exts.vec16()?;
            hello.extensions.push(ext_type);
            let mut d = Reader(data);
            match ext_type {
                EXT_SERVER_NAME => {
                    let mut list = Reader(d.vec16().unwrap_or(&[]));
                    while let Some(name_type) = list.u8() {
                        let Some(name) = list.vec16() else { break };
                        if name_type == 0 {
                            hello.sni = Some(String::from_utf8_lossy(name).into_owned());
                            break;
                        }
                    }
                }
                EXT_SUPPORTED_GROUPS => hello.supported_groups = u16_list(d.vec16().unwrap_or(&[])),
                EXT_EC_POINT_FORMATS => hello.ec_point_formats = d.vec8().unwrap_or(&[]).to_vec(),
                EXT_SUPPORTED_VERSIONS => hello.supported_versions = u16_list(d.vec8().unwrap_or(&[])),
                _ => {}
            }
        }
        Some(hello)
    }

    /// Highest non-GREASE entry of `supported_versions`, else the legacy version.
    pub fn offered_version(&self) -> u16 {
        self.supported_versions
            .iter()
            .copied()
            .filter(|&v| !is_grease(v))
            .max()
            .unwrap_or(self.legacy_version)
    }

    pub fn ja3_string(&self) -> String {
        fn join<T: Copy + Into<u16>>(values: &[T]) -> String {
            values
                .iter()
                .map(|&v| v.into())
                .filter(|&v| !is_grease(v))
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("-")
        }
        format!(
            "{},{},{},{},{}",
            self.legacy_version,
            join(&self.cipher_suites),
            join(&self.extensions),
            join(&self.supported_groups),
            join(&self.ec_point_formats)
        )
    }

    pub fn ja3_digest(&self) -> String {
        hex::encode(Md5::digest(self.ja3_string().as_bytes()))
    }
}

fn names() -> Vec<String> {
    let mut names: Vec<String> = ["tls_is_tls", "tls_records", "tls_fwd_records", "tls_bwd_records"]
        .map(String::from)
        .to_vec();
    for scope in ["", "fwd_", "bwd_"] {
        for stat in ["min", "max", "mean", "std"] {
            names.push(format!("tls_{scope}rec_size_{stat}"));
        }
    }
    for kind in ["ccs", "alert", "handshake", "appdata", "heartbeat"] {
        names.push(format!("tls_{kind}_records"));
    }
    names.extend(clump_feature_names("tls_clump_"));
    names.extend(
        [
            "tls_ch_cipher_count",
            "tls_ch_extension_count",
            "tls_ch_sni_len",
            "tls_ch_version",
            "tls_ja3_string",
            "tls_ja3",
        ]
        .map(String::from),
    );
    names
}

const FEATURE_COUNT: usize = 4 + 12 + 5 + 39 + 6;

fn stream_is_plausible(s: &ByteStream) -> bool {
    s.is_empty() || plausible_header(&s.data)
}

/// TLS record statistics, record clumps and ClientHello fields.
pub fn tls_features(flow: &BiFlow) -> FeatureRecord {
    let (fwd, bwd) = (&flow.tls_stream_fwd, &flow.tls_stream_bwd);
    let is_tls = flow.protocol() == PROTO_TCP
        && !(fwd.is_empty() && bwd.is_empty())
        && stream_is_plausible(fwd)
        && stream_is_plausible(bwd);
    if !is_tls {
        let mut values = vec![FeatureValue::Missing; FEATURE_COUNT];
        values[0] = FeatureValue::Number(0.0);
        return FeatureRecord::flat("tls", names(), values);
    }

    let fwd_records = parse_records(&fwd.data);
    let bwd_records = parse_records(&bwd.data);

    // global record order follows the packet that carried each header
    let mut ordered: Vec<(usize, usize, Direction, u16, u8)> = Vec::new();
    for (records, stream, dir) in [
        (&fwd_records, fwd, Direction::Forward),
        (&bwd_records, bwd, Direction::Backward),
    ] {
        for r in records {
            if let Some(packet) = stream.packet_at(r.offset) {
                ordered.push((packet, r.offset, dir, r.length, r.content_type));
            }
        }
    }
    ordered.sort_by_key(|&(packet, offset, _, _, _)| (packet, offset));

    let mut values: Vec<FeatureValue> = Vec::with_capacity(FEATURE_COUNT);
    let count = |n: usize| FeatureValue::Number(n as f64);
    values.push(FeatureValue::Number(1.0));
    values.push(count(fwd_records.len() + bwd_records.len()));
    values.push(count(fwd_records.len()));
    values.push(count(bwd_records.len()));

    let sizes = |records: &[&TlsRecord]| -> Vec<f64> { records.iter().map(|r| f64::from(r.length)).collect() };
    let all: Vec<&TlsRecord> = fwd_records.iter().chain(&bwd_records).collect();
    let fwd_refs: Vec<&TlsRecord> = fwd_records.iter().collect();
    let bwd_refs: Vec<&TlsRecord> = bwd_records.iter().collect();
    for scope in [&all, &fwd_refs, &bwd_refs] {
        match Summary::of(&sizes(scope)) {
            Some(s) => values.extend(s.to_array().map(FeatureValue::Number)),
            None => values.extend(std::iter::repeat_n(FeatureValue::Missing, 4)),
        }
    }
    for kind in CONTENT_CHANGE_CIPHER_SPEC..=CONTENT_HEARTBEAT {
        values.push(count(all.iter().filter(|r| r.content_type == kind).count()));
    }

    let clumps = partition_clumps(
        ordered
            .iter()
            .map(|&(packet, _, dir, len, _)| (dir, flow.packets[packet].rel_time, u32::from(len))),
    );
    values.extend(clump_features(&clumps));

    match ClientHello::from_stream(&fwd.data) {
        Some(hello) => {
            values.push(count(hello.cipher_suites.len()));
            values.push(count(hello.extensions.len()));
            values.push(hello.sni.as_ref().map(|s| s.len() as f64).into());
            values.push(FeatureValue::Number(f64::from(hello.offered_version())));
            values.push(FeatureValue::Text(hello.ja3_string()));
            values.push(FeatureValue::Text(hello.ja3_digest()));
        }
        None => values.extend(std::iter::repeat_n(FeatureValue::Missing, 6)),
    }
    FeatureRecord::flat("tls", names(), values)
}

pub(crate) struct Tls;

impl Plugin for Tls {
    fn name(&self) -> &str {
        "tls"
    }
    fn shape(&self) -> Shape {
        Shape::Flat(FEATURE_COUNT)
    }
    fn feature_names(&self) -> Vec<String> {
        names()
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        tls_features(flow)
    }
}
