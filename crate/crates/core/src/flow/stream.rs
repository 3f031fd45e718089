/// In-order byte stream of one TCP direction.
///
/// Built from payload segments placed by sequence number; overlapping
/// retransmissions are resolved last-writer-wins. The stream stops at the
/// first hole.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ByteStream {
    pub data: Vec<u8>,
    /// Which packet supplied each run of bytes, ordered by `start`.
    pub spans: Vec<StreamSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSpan {
    pub start: usize,
    /// Index into the flow's packet list.
    pub packet: usize,
}

impl ByteStream {
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Packet that supplied the byte at `offset`.
    pub fn packet_at(&self, offset: usize) -> Option<usize> {
        if offset >= self.data.len() {
            return None;
        }
        let idx = self.spans.partition_point(|s| s.start <= offset);
        idx.checked_sub(1).map(|i| self.spans[i].packet)
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    offset: u64,
    len: usize,
    packet: usize,
}

/// Collects segment placements while a flow is live; bytes are read from
/// the flow's packet payloads only when the flow completes.
#[derive(Debug, Clone)]
pub(crate) struct StreamBuilder {
    base: Option<u32>,
    limit: usize,
    segments: Vec<Segment>,
}

impl StreamBuilder {
    pub(crate) fn new(limit: usize) -> Self {
        StreamBuilder {
            base: None,
            limit,
            segments: Vec::new(),
        }
    }

    pub(crate) fn observe_syn(&mut self, seq: u32) {
        if self.base.is_none() {
            self.base = Some(seq.wrapping_add(1));
        }
    }

    pub(crate) fn add(&mut self, seq: u32, len: usize, packet: usize) {
        if len == 0 || self.limit == 0 {
            return;
        }
        let base = *self.base.get_or_insert(seq);
        let offset = u64::from(seq.wrapping_sub(base));
        if offset >= self.limit as u64 {
            return;
        }
        let len = len.min(self.limit - offset as usize);
        self.segments.push(Segment { offset, len, packet });
    }

    pub(crate) fn build<'a>(&self, payload_of: impl Fn(usize) -> &'a [u8]) -> ByteStream {
        let end = self
            .segments
            .iter()
            .map(|s| s.offset as usize + s.len)
            .max()
            .unwrap_or(0);
        if end == 0 {
            return ByteStream::default();
        }
        let mut data = vec![0u8; end];
        let mut owner = vec![usize::MAX; end];
        for seg in &self.segments {
            let start = seg.offset as usize;
            let src = &payload_of(seg.packet)[..seg.len];
            data[start..start + seg.len].copy_from_slice(src);
            owner[start..start + seg.len].fill(seg.packet);
        }
        let filled = owner.iter().position(|&o| o == usize::MAX).unwrap_or(end);
        data.truncate(filled);
        let mut spans: Vec<StreamSpan> = Vec::new();
        for (i, &packet) in owner[..filled].iter().enumerate() {
            if spans.last().map(|s| s.packet) != Some(packet) {
                spans.push(StreamSpan { start: i, packet });
            }
        }
        ByteStream { data, spans }
    }
}
