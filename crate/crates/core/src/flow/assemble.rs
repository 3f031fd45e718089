use std::collections::BTreeMap;
use std::io::Read;
use std::path::PathBuf;

use super::{BiFlow, FlowConfig, FlowTable};
use crate::capture::{decode_packet, CaptureError, CaptureReader, SkipReason};

/// Flows of one capture plus decode accounting.
#[derive(Debug)]
pub struct Assembly {
    /// Completed flows in emission order.
    pub flows: Vec<BiFlow>,
    pub frames: u64,
    pub decoded: u64,
    /// Skipped frames by reason.
    pub skipped: BTreeMap<String, u64>,
    /// Read error that ended the capture early; flows up to it are kept.
    pub error: Option<CaptureError>,
}

/// Reads every frame of `reader`, decodes it and groups the packets into
/// flows. `on_flow` sees each completed flow as soon as it is emitted;
/// returning `false` from it drops the flow from [`Assembly::flows`].
pub fn assemble_with<R: Read>(
    reader: CaptureReader<R>,
    config: &FlowConfig,
    source: impl Into<PathBuf>,
    mut on_flow: impl FnMut(&BiFlow) -> bool,
) -> Assembly {
    let mut table = FlowTable::new(config, source);
    let mut out = Assembly {
        flows: Vec::new(),
        frames: 0,
        decoded: 0,
        skipped: BTreeMap::new(),
        error: None,
    };
    let mut keep = |flows: Vec<BiFlow>, out: &mut Assembly| {
        for f in flows {
            if on_flow(&f) {
                out.flows.push(f);
            }
        }
    };
    for frame in reader {
        let frame = match frame {
            Ok(frame) => frame,
            Err(e) => {
                out.error = Some(e);
                break;
            }
        };
        out.frames += 1;
        match decode_packet(&frame.data, frame.link_type, frame.timestamp) {
            Ok(pkt) => {
                out.decoded += 1;
                let done = table.ingest(pkt);
                keep(done, &mut out);
            }
            Err(reason) => {
                let key = match reason {
                    SkipReason::Malformed(_) => "malformed".to_string(),
                    other => other.to_string(),
                };
                *out.skipped.entry(key).or_default() += 1;
            }
        }
    }
    let rest = table.flush();
    keep(rest, &mut out);
    out
}

/// [`assemble_with`] keeping every flow.
pub fn assemble<R: Read>(reader: CaptureReader<R>, config: &FlowConfig, source: impl Into<PathBuf>) -> Assembly {
    assemble_with(reader, config, source, |_| true)
}
