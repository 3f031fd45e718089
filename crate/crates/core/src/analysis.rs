//! Dataset profiling: per-label flow statistics, protocol mix and TCP flows
//! that never completed a handshake.
//!
//! [`DatasetProfile`] is a streaming accumulator; profiles built over
//! disjoint flow sets can be merged in any order with the same result up to
//! floating-point rounding of the merged moments.

use std::collections::BTreeMap;
use std::io::{self, Write};

use crate::capture::{PROTO_ICMP, PROTO_ICMPV6, PROTO_IGMP, PROTO_TCP, PROTO_UDP};
use crate::flow::{BiFlow, Direction, PacketRecord};
use crate::labeling::LabelSet;

/// Group name for flows without a label on the chosen dimension.
pub const UNLABELED: &str = "(unlabeled)";
/// Pseudo-dimension grouping flows by their capture file.
pub const SOURCE_FILE_DIMENSION: &str = "source_file";

pub const PROTOCOL_NAMES: [&str; 6] = ["TCP", "UDP", "ICMP", "ICMPv6", "IGMP", "other"];

pub fn protocol_name(protocol: u8) -> &'static str {
    match protocol {
        PROTO_TCP => "TCP",
        PROTO_UDP => "UDP",
        PROTO_ICMP => "ICMP",
        PROTO_ICMPV6 => "ICMPv6",
        PROTO_IGMP => "IGMP",
        _ => "other",
    }
}

/// Count, mean and population variance (Welford, Chan merge).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then_some(self.mean)
    }

    pub fn std(&self) -> Option<f64> {
        (self.n > 0).then(|| (self.m2 / self.n as f64).max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    All,
    Forward,
    Backward,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::All, Scope::Forward, Scope::Backward];

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::All => "all",
            Scope::Forward => "fwd",
            Scope::Backward => "bwd",
        }
    }

    fn includes(self, p: &PacketRecord) -> bool {
        match self {
            Scope::All => true,
            Scope::Forward => p.direction == Direction::Forward,
            Scope::Backward => p.direction == Direction::Backward,
        }
    }
}

/// Per-flow quantities aggregated over the flows of one label and scope. A
/// directional scope only counts flows with at least one packet in that
/// direction; duration and IAT only count flows with two or more.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScopeStats {
    pub flow_count: u64,
    pub packets: Moments,
    pub bytes: Moments,
    pub packet_size: Moments,
    pub duration_s: Moments,
    pub iat_ms: Moments,
}

impl ScopeStats {
    pub fn defined_duration_count(&self) -> u64 {
        self.duration_s.n
    }

    fn add(&mut self, flow: &BiFlow, scope: Scope) {
        let mut n = 0u64;
        let mut bytes = 0u64;
        let (mut first, mut last) = (f64::NAN, f64::NAN);
        for p in flow.packets.iter().filter(|p| scope.includes(p)) {
            if n == 0 {
                first = p.rel_time;
            }
            last = p.rel_time;
            n += 1;
            bytes += u64::from(p.ip_size);
        }
        if n == 0 {
            return;
        }
        self.flow_count += 1;
        self.packets.push(n as f64);
        self.bytes.push(bytes as f64);
        self.packet_size.push(bytes as f64 / n as f64);
        if n >= 2 {
            let duration = last - first;
            self.duration_s.push(duration);
            self.iat_ms.push(duration / (n - 1) as f64 * 1000.0);
        }
    }

    fn merge(&mut self, other: &ScopeStats) {
        self.flow_count += other.flow_count;
        self.packets.merge(&other.packets);
        self.bytes.merge(&other.bytes);
        self.packet_size.merge(&other.packet_size);
        self.duration_s.merge(&other.duration_s);
        self.iat_ms.merge(&other.iat_ms);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelStats {
    pub label: String,
    pub flow_count: u64,
    /// Indexed like [`Scope::ALL`].
    pub scopes: [ScopeStats; 3],
}

impl LabelStats {
    pub fn scope(&self, scope: Scope) -> &ScopeStats {
        &self.scopes[scope as usize]
    }

    pub fn defined_duration_count(&self) -> u64 {
        self.scope(Scope::All).defined_duration_count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UnopenedTcp {
    pub unopened: u64,
    pub tcp_flows: u64,
}

impl UnopenedTcp {
    pub fn ratio(&self) -> Option<f64> {
        (self.tcp_flows > 0).then(|| self.unopened as f64 / self.tcp_flows as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Group {
    flow_count: u64,
    scopes: [ScopeStats; 3],
    protocols: BTreeMap<&'static str, u64>,
    unopened: UnopenedTcp,
}

/// Streaming per-label profile of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetProfile {
    dimension: String,
    groups: BTreeMap<String, Group>,
}

impl DatasetProfile {
    /// Groups by the label on `dimension`, or by capture file when
    /// `dimension` is [`SOURCE_FILE_DIMENSION`].
    pub fn new(dimension: impl Into<String>) -> Self {
        DatasetProfile {
            dimension: dimension.into(),
            groups: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> &str {
        &self.dimension
    }

    fn group_of(&self, flow: &BiFlow, labels: &LabelSet) -> String {
        if self.dimension == SOURCE_FILE_DIMENSION {
            return flow.source_file.display().to_string();
        }
        labels.get(&self.dimension).unwrap_or(UNLABELED).to_string()
    }

    pub fn add(&mut self, flow: &BiFlow, labels: &LabelSet) {
        let key = self.group_of(flow, labels);
        let g = self.groups.entry(key).or_default();
        g.flow_count += 1;
        for scope in Scope::ALL {
            g.scopes[scope as usize].add(flow, scope);
        }
        *g.protocols.entry(protocol_name(flow.protocol())).or_default() += 1;
        if flow.protocol() == PROTO_TCP {
            g.unopened.tcp_flows += 1;
            if flow.is_unopened_tcp() {
                g.unopened.unopened += 1;
            }
        }
    }

    pub fn merge(&mut self, other: DatasetProfile) {
        for (label, o) in other.groups {
            let g = self.groups.entry(label).or_default();
            g.flow_count += o.flow_count;
            for (mine, theirs) in g.scopes.iter_mut().zip(&o.scopes) {
                mine.merge(theirs);
            }
            for (p, n) in o.protocols {
                *g.protocols.entry(p).or_default() += n;
            }
            g.unopened.tcp_flows += o.unopened.tcp_flows;
            g.unopened.unopened += o.unopened.unopened;
        }
    }

    pub fn total_flows(&self) -> u64 {
        self.groups.values().map(|g| g.flow_count).sum()
    }

    /// Sorted by label.
    pub fn label_stats(&self) -> Vec<LabelStats> {
        self.groups
            .iter()
            .map(|(label, g)| LabelStats {
                label: label.clone(),
                flow_count: g.flow_count,
                scopes: g.scopes,
            })
            .collect()
    }

    /// Label → protocol name → flow count; only protocols that occur.
    pub fn protocol_distribution(&self) -> BTreeMap<String, BTreeMap<&'static str, u64>> {
        self.groups
            .iter()
            .map(|(label, g)| (label.clone(), g.protocols.clone()))
            .collect()
    }

    /// Label → unopened TCP counts, for labels with at least one TCP flow.
    pub fn unopened_tcp(&self) -> BTreeMap<String, UnopenedTcp> {
        self.groups
            .iter()
            .filter(|(_, g)| g.unopened.tcp_flows > 0)
            .map(|(label, g)| (label.clone(), g.unopened))
            .collect()
    }

    /// Unopened TCP counts over all labels.
    pub fn unopened_total(&self) -> UnopenedTcp {
        self.groups.values().fold(UnopenedTcp::default(), |acc, g| UnopenedTcp {
            unopened: acc.unopened + g.unopened.unopened,
            tcp_flows: acc.tcp_flows + g.unopened.tcp_flows,
        })
    }

    pub fn write_label_stats_csv(&self, mut w: impl Write) -> io::Result<()> {
        let mut cols = vec![
            "label".to_string(),
            "scope".into(),
            "flow_count".into(),
            "defined_duration_count".into(),
        ];
        for q in ["packets", "bytes", "packet_size", "duration_s", "iat_ms"] {
            cols.push(format!("{q}_mean"));
            cols.push(format!("{q}_std"));
        }
        writeln!(w, "{}", cols.join(","))?;
        for stats in self.label_stats() {
            for scope in Scope::ALL {
                let s = stats.scope(scope);
                let mut row = vec![
                    csv_field(&stats.label),
                    scope.as_str().to_string(),
                    s.flow_count.to_string(),
                    s.defined_duration_count().to_string(),
                ];
                for m in [&s.packets, &s.bytes, &s.packet_size, &s.duration_s, &s.iat_ms] {
                    row.push(opt(m.mean()));
                    row.push(opt(m.std()));
                }
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }

    pub fn write_protocol_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "label,{}", PROTOCOL_NAMES.join(","))?;
        for (label, g) in &self.groups {
            let counts: Vec<String> = PROTOCOL_NAMES
                .iter()
                .map(|p| g.protocols.get(p).copied().unwrap_or(0).to_string())
                .collect();
            writeln!(w, "{},{}", csv_field(label), counts.join(","))?;
        }
        Ok(())
    }

    pub fn write_unopened_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "label,unopened,tcp_flows,ratio")?;
        for (label, u) in self.unopened_tcp() {
            writeln!(
                w,
                "{},{},{},{}",
                csv_field(&label),
                u.unopened,
                u.tcp_flows,
                opt(u.ratio())
            )?;
        }
        Ok(())
    }

    /// Fixed-width text table of the headline numbers.
    pub fn write_summary(&self, mut w: impl Write) -> io::Result<()> {
        let total = self.unopened_total();
        writeln!(w, "dimension: {}", self.dimension)?;
        writeln!(w, "flows: {}", self.total_flows())?;
        writeln!(
            w,
            "unopened tcp: {} of {} ({})",
            total.unopened,
            total.tcp_flows,
            total.ratio().map_or("n/a".into(), |r| format!("{:.1}%", r * 100.0))
        )?;
        writeln!(w)?;
        let width = self.groups.keys().map(|l| l.len()).max().unwrap_or(5).max(5);
        writeln!(
            w,
            "{:<width$}  {:>8}  {:>10}  {:>12}  {:>12}  {:>12}  {:>8}",
            "label", "flows", "pkts/flow", "bytes/flow", "duration_s", "iat_ms", "unopened"
        )?;
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        for stats in self.label_stats() {
            let s = stats.scope(Scope::All);
            let u = &self.groups[&stats.label].unopened;
            writeln!(
                w,
                "{:<width$}  {:>8}  {:>10}  {:>12}  {:>12}  {:>12}  {:>8}",
                stats.label,
                stats.flow_count,
                f(s.packets.mean()),
                f(s.bytes.mean()),
                f(s.duration_s.mean()),
                f(s.iat_ms.mean()),
                u.unopened
            )?;
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-label statistics of `flows` on `dimension`.
pub fn dataset_stats<'a>(
    flows: impl IntoIterator<Item = (&'a BiFlow, &'a LabelSet)>,
    dimension: &str,
) -> Vec<LabelStats> {
    profile(flows, dimension).label_stats()
}

pub fn protocol_distribution<'a>(
    flows: impl IntoIterator<Item = (&'a BiFlow, &'a LabelSet)>,
    dimension: &str,
) -> BTreeMap<String, BTreeMap<&'static str, u64>> {
    profile(flows, dimension).protocol_distribution()
}

pub fn unopened_tcp<'a>(
    flows: impl IntoIterator<Item = (&'a BiFlow, &'a LabelSet)>,
    dimension: &str,
) -> BTreeMap<String, UnopenedTcp> {
    profile(flows, dimension).unopened_tcp()
}

fn profile<'a>(flows: impl IntoIterator<Item = (&'a BiFlow, &'a LabelSet)>, dimension: &str) -> DatasetProfile {
    let mut p = DatasetProfile::new(dimension);
    for (flow, labels) in flows {
        p.add(flow, labels);
    }
    p
}
