//! Autonomous-system lookup from an iptoasn-style range dump.
//!
//! Each line is `range_start range_end asn country_code description`,
//! tab-separated (whitespace separation is accepted when the line has no
//! tabs). Ranges are inclusive and expected not to overlap. Rows with AS
//! number 0 ("not routed") are treated as misses.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::net::IpAddr;
use std::path::Path;
use std::sync::Arc;

use super::{FeatureRecord, FeatureValue, Plugin, Shape};
use crate::flow::BiFlow;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsnInfo {
    pub num: u32,
    pub code: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsnLookup {
    Found(AsnInfo),
    Miss,
}

#[derive(Debug, thiserror::Error)]
pub enum AsnDbError {
    #[error("cannot read ASN database: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Sorted, non-overlapping address ranges for each address family.
#[derive(Debug, Default)]
pub struct AsnDb {
    v4: Vec<(u32, u32, usize)>,
    v6: Vec<(u128, u128, usize)>,
    records: Vec<AsnInfo>,
}

impl AsnDb {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AsnDbError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, AsnDbError> {
        let mut db = AsnDb::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            db.add_line(line)
                .map_err(|reason| AsnDbError::Parse { line: i + 1, reason })?;
        }
        db.v4.sort_unstable();
        db.v6.sort_unstable();
        Ok(db)
    }

    fn add_line(&mut self, line: &str) -> Result<(), String> {
        let fields: Vec<&str> = if line.contains('\t') {
            line.splitn(5, '\t').collect()
        } else {
            let mut fields = Vec::with_capacity(5);
            let mut rest = line.trim();
            while fields.len() < 4 && !rest.is_empty() {
                match rest.split_once(char::is_whitespace) {
                    Some((head, tail)) => {
                        fields.push(head);
                        rest = tail.trim_start();
                    }
                    None => {
                        fields.push(rest);
                        rest = "";
                    }
                }
            }
            if !rest.is_empty() {
                fields.push(rest);
            }
            fields
        };
        if fields.len() < 4 {
            return Err(format!("expected at least 4 fields, found {}", fields.len()));
        }
        let start: IpAddr = fields[0].trim().parse().map_err(|e| format!("range start: {e}"))?;
        let end: IpAddr = fields[1].trim().parse().map_err(|e| format!("range end: {e}"))?;
        let num: u32 = fields[2].trim().parse().map_err(|e| format!("asn: {e}"))?;
        if num == 0 {
            return Ok(());
        }
        let idx = self.records.len();
        match (start, end) {
            (IpAddr::V4(s), IpAddr::V4(e)) if u32::from(s) <= u32::from(e) => {
                self.v4.push((u32::from(s), u32::from(e), idx));
            }
            (IpAddr::V6(s), IpAddr::V6(e)) if u128::from(s) <= u128::from(e) => {
                self.v6.push((u128::from(s), u128::from(e), idx));
            }
            _ => return Err("range bounds of different families or reversed".into()),
        }
        self.records.push(AsnInfo {
            num,
            code: fields[3].trim().to_string(),
            description: fields.get(4).map_or("", |d| d.trim()).to_string(),
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self, ip: IpAddr) -> AsnLookup {
        fn find<T: Ord + Copy>(ranges: &[(T, T, usize)], ip: T) -> Option<usize> {
            let i = ranges.partition_point(|&(start, _, _)| start <= ip).checked_sub(1)?;
            let (_, end, idx) = ranges[i];
            (ip <= end).then_some(idx)
        }
        let hit = match ip {
            IpAddr::V4(v4) => find(&self.v4, u32::from(v4)),
            IpAddr::V6(v6) => match v6.to_ipv4_mapped() {
                Some(v4) => find(&self.v4, u32::from(v4)),
                None => find(&self.v6, u128::from(v6)),
            },
        };
        hit.map_or(AsnLookup::Miss, |i| AsnLookup::Found(self.records[i].clone()))
    }
}

/// ASN records of the flow initiator (source) and responder (destination).
pub fn asn_info(flow: &BiFlow, db: &AsnDb) -> (AsnLookup, AsnLookup) {
    (db.lookup(flow.initiator.ip), db.lookup(flow.responder().ip))
}

pub(crate) const NAMES: [&str; 6] = [
    "src_asn_num",
    "src_asn_code",
    "src_asn_desc",
    "dst_asn_num",
    "dst_asn_code",
    "dst_asn_desc",
];

fn lookup_values(l: &AsnLookup) -> [FeatureValue; 3] {
    match l {
        AsnLookup::Found(info) => [
            FeatureValue::Number(f64::from(info.num)),
            FeatureValue::Text(info.code.clone()),
            FeatureValue::Text(info.description.clone()),
        ],
        AsnLookup::Miss => [FeatureValue::Missing, FeatureValue::Missing, FeatureValue::Missing],
    }
}

pub(crate) struct AsnPlugin {
    pub db: Arc<AsnDb>,
}

impl Plugin for AsnPlugin {
    fn name(&self) -> &str {
        "asn_info"
    }
    fn shape(&self) -> Shape {
        Shape::Flat(6)
    }
    fn feature_names(&self) -> Vec<String> {
        NAMES.map(String::from).to_vec()
    }
    fn extract(&self, flow: &BiFlow) -> FeatureRecord {
        let (src, dst) = asn_info(flow, &self.db);
        let mut values = lookup_values(&src).to_vec();
        values.extend(lookup_values(&dst));
        FeatureRecord::flat("asn_info", self.feature_names(), values)
    }
}
