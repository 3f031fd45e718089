use std::fs::File;
use std::io::{BufReader, ErrorKind, Read};
use std::path::Path;

use super::{CaptureError, LinkType, Timestamp};

const PCAP_MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const PCAP_MAGIC_NANOS: u32 = 0xa1b2_3c4d;
const PCAPNG_SHB: u32 = 0x0a0d_0d0a;
const PCAPNG_BYTE_ORDER_MAGIC: u32 = 0x1a2b_3c4d;

const BLOCK_IDB: u32 = 1;
const BLOCK_EPB: u32 = 6;

const OPT_END: u16 = 0;
const OPT_IF_TSRESOL: u16 = 9;
const OPT_IF_TSOFFSET: u16 = 14;

// Anything larger is treated as corruption rather than a real frame.
const MAX_RECORD_LEN: u32 = 256 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureFormat {
    Pcap { nanosecond: bool, big_endian: bool },
    PcapNg,
}

/// One raw captured frame as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub timestamp: Timestamp,
    pub link_type: LinkType,
    pub interface: u32,
    pub orig_len: u32,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
struct Interface {
    link_type: LinkType,
    // ticks per second is 10^exp (decimal) or 2^exp (binary)
    resolution: Resolution,
    offset_secs: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Resolution {
    Decimal(u32),
    Binary(u32),
}

impl Resolution {
    fn from_option(byte: u8) -> Self {
        if byte & 0x80 == 0 {
            Resolution::Decimal(u32::from(byte))
        } else {
            Resolution::Binary(u32::from(byte & 0x7f))
        }
    }

    fn to_micros(self, ticks: u64) -> u64 {
        let ticks = u128::from(ticks);
        let micros = match self {
            Resolution::Decimal(6) => ticks,
            Resolution::Decimal(exp) if exp < 6 => ticks * 10u128.pow(6 - exp),
            Resolution::Decimal(exp) => ticks / 10u128.pow((exp - 6).min(38)),
            Resolution::Binary(exp) => {
                if exp >= 127 {
                    0
                } else {
                    ticks * 1_000_000 / (1u128 << exp)
                }
            }
        };
        u64::try_from(micros).unwrap_or(u64::MAX)
    }
}

#[derive(Debug, Clone, Copy)]
struct Endian {
    big: bool,
}

impl Endian {
    fn u16(self, b: &[u8]) -> u16 {
        let raw = [b[0], b[1]];
        if self.big {
            u16::from_be_bytes(raw)
        } else {
            u16::from_le_bytes(raw)
        }
    }

    fn u32(self, b: &[u8]) -> u32 {
        let raw = [b[0], b[1], b[2], b[3]];
        if self.big {
            u32::from_be_bytes(raw)
        } else {
            u32::from_le_bytes(raw)
        }
    }

    fn i64(self, b: &[u8]) -> i64 {
        let mut raw = [0u8; 8];
        raw.copy_from_slice(&b[..8]);
        if self.big {
            i64::from_be_bytes(raw)
        } else {
            i64::from_le_bytes(raw)
        }
    }
}

/// Streaming reader over a PCAP or PCAPNG file.
///
/// Yields frames in file order. A truncated trailing record yields one
/// [`CaptureError::Truncated`] after all complete frames, then the stream
/// ends.
pub struct CaptureReader<R> {
    inner: R,
    offset: u64,
    format: CaptureFormat,
    endian: Endian,
    pcap_link: LinkType,
    interfaces: Vec<Interface>,
    done: bool,
}

/// Opens a capture file and validates its header.
pub fn open_capture(path: impl AsRef<Path>) -> Result<CaptureReader<BufReader<File>>, CaptureError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CaptureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    CaptureReader::new(BufReader::new(file))
}

impl<R: Read> CaptureReader<R> {
    pub fn new(mut inner: R) -> Result<Self, CaptureError> {
        let mut magic = [0u8; 4];
        if read_full(&mut inner, &mut magic)? != 4 {
            return Err(CaptureError::ShortHeader);
        }
        let le = u32::from_le_bytes(magic);
        let be = u32::from_be_bytes(magic);

        let mut reader = CaptureReader {
            inner,
            offset: 4,
            format: CaptureFormat::PcapNg,
            endian: Endian { big: false },
            pcap_link: LinkType::Ethernet,
            interfaces: Vec::new(),
            done: false,
        };

        let pcap = match (le, be) {
            (PCAP_MAGIC_MICROS, _) => Some((false, false)),
            (PCAP_MAGIC_NANOS, _) => Some((true, false)),
            (_, PCAP_MAGIC_MICROS) => Some((false, true)),
            (_, PCAP_MAGIC_NANOS) => Some((true, true)),
            _ => None,
        };
        if let Some((nanosecond, big_endian)) = pcap {
            let mut header = [0u8; 20];
            if reader.read_chunk(&mut header)? != 20 {
                return Err(CaptureError::ShortHeader);
            }
            reader.endian = Endian { big: big_endian };
            reader.format = CaptureFormat::Pcap { nanosecond, big_endian };
            // upper bits of the link field carry FCS information
            let link = reader.endian.u32(&header[16..20]) & 0x0fff_ffff;
            reader.pcap_link = LinkType::from_code(link);
            return Ok(reader);
        }

        if le == PCAPNG_SHB {
            let mut len_bytes = [0u8; 4];
            if reader.read_chunk(&mut len_bytes)? != 4 {
                return Err(CaptureError::ShortHeader);
            }
            reader.read_section_header(0, len_bytes)?;
            return Ok(reader);
        }
        Err(CaptureError::UnknownMagic(be))
    }

    pub fn format(&self) -> CaptureFormat {
        self.format
    }

    /// Link types of the interfaces declared so far (one entry for PCAP).
    pub fn link_types(&self) -> Vec<LinkType> {
        match self.format {
            CaptureFormat::Pcap { .. } => vec![self.pcap_link],
            CaptureFormat::PcapNg => self.interfaces.iter().map(|i| i.link_type).collect(),
        }
    }

    fn read_chunk(&mut self, buf: &mut [u8]) -> Result<usize, CaptureError> {
        let n = read_full(&mut self.inner, buf)?;
        self.offset += n as u64;
        Ok(n)
    }

    /// Reads exactly `buf.len()` bytes; `Ok(false)` on clean EOF before any byte.
    fn read_record_part(&mut self, buf: &mut [u8], start: u64, allow_eof: bool) -> Result<bool, CaptureError> {
        let n = self.read_chunk(buf)?;
        if n == buf.len() {
            Ok(true)
        } else if n == 0 && allow_eof {
            Ok(false)
        } else {
            Err(CaptureError::Truncated { offset: start })
        }
    }

    fn next_pcap(&mut self) -> Result<Option<Frame>, CaptureError> {
        let start = self.offset;
        let mut header = [0u8; 16];
        if !self.read_record_part(&mut header, start, true)? {
            return Ok(None);
        }
        let e = self.endian;
        let secs = u64::from(e.u32(&header[0..4]));
        let frac = u64::from(e.u32(&header[4..8]));
        let incl = e.u32(&header[8..12]);
        let orig = e.u32(&header[12..16]);
        if incl > MAX_RECORD_LEN {
            return Err(CaptureError::Malformed {
                offset: start,
                reason: "record length too large",
            });
        }
        let mut data = vec![0u8; incl as usize];
        self.read_record_part(&mut data, start, false)?;
        let micros = match self.format {
            CaptureFormat::Pcap { nanosecond: true, .. } => frac / 1000,
            _ => frac,
        };
        Ok(Some(Frame {
            timestamp: Timestamp::from_secs_micros(secs, micros),
            link_type: self.pcap_link,
            interface: 0,
            orig_len: orig,
            data,
        }))
    }

    fn next_pcapng(&mut self) -> Result<Option<Frame>, CaptureError> {
        loop {
            let start = self.offset;
            let mut head = [0u8; 8];
            if !self.read_record_part(&mut head, start, true)? {
                return Ok(None);
            }
            let block_type = self.endian.u32(&head[0..4]);
            if u32::from_le_bytes([head[0], head[1], head[2], head[3]]) == PCAPNG_SHB {
                self.read_section_header(start, [head[4], head[5], head[6], head[7]])?;
                continue;
            }
            let total = self.endian.u32(&head[4..8]);
            if total < 12 || !total.is_multiple_of(4) || total > MAX_RECORD_LEN {
                return Err(CaptureError::Malformed {
                    offset: start,
                    reason: "bad block length",
                });
            }
            let mut body = vec![0u8; total as usize - 8];
            self.read_record_part(&mut body, start, false)?;
            body.truncate(body.len() - 4);

            match block_type {
                BLOCK_IDB => self.parse_interface(&body, start)?,
                BLOCK_EPB => return self.parse_enhanced_packet(body, start).map(Some),
                _ => {}
            }
        }
    }

    // Block type and the still-undecoded length bytes are already consumed.
    fn read_section_header(&mut self, start: u64, len_bytes: [u8; 4]) -> Result<(), CaptureError> {
        let mut bom = [0u8; 4];
        self.read_record_part(&mut bom, start, false)?;
        let bom_le = u32::from_le_bytes(bom);
        let big = if bom_le == PCAPNG_BYTE_ORDER_MAGIC {
            false
        } else if bom_le.swap_bytes() == PCAPNG_BYTE_ORDER_MAGIC {
            true
        } else {
            return Err(CaptureError::Malformed {
                offset: start,
                reason: "bad byte-order magic",
            });
        };
        self.endian = Endian { big };
        let total = self.endian.u32(&len_bytes);
        if total < 28 || !total.is_multiple_of(4) || total > MAX_RECORD_LEN {
            return Err(CaptureError::Malformed {
                offset: start,
                reason: "bad section header length",
            });
        }
        let mut rest = vec![0u8; total as usize - 12];
        self.read_record_part(&mut rest, start, false)?;
        self.interfaces.clear();
        Ok(())
    }

    fn parse_interface(&mut self, body: &[u8], start: u64) -> Result<(), CaptureError> {
        if body.len() < 8 {
            return Err(CaptureError::Malformed {
                offset: start,
                reason: "short interface description",
            });
        }
        let e = self.endian;
        let mut iface = Interface {
            link_type: LinkType::from_code(u32::from(e.u16(&body[0..2]))),
            resolution: Resolution::Decimal(6),
            offset_secs: 0,
        };
        let mut opts = &body[8..];
        while opts.len() >= 4 {
            let code = e.u16(&opts[0..2]);
            let len = e.u16(&opts[2..4]) as usize;
            let padded = (len + 3) & !3;
            if code == OPT_END || opts.len() < 4 + len {
                break;
            }
            let value = &opts[4..4 + len];
            match code {
                OPT_IF_TSRESOL if len >= 1 => iface.resolution = Resolution::from_option(value[0]),
                OPT_IF_TSOFFSET if len >= 8 => iface.offset_secs = e.i64(value),
                _ => {}
            }
            opts = &opts[(4 + padded).min(opts.len())..];
        }
        self.interfaces.push(iface);
        Ok(())
    }

    fn parse_enhanced_packet(&mut self, body: Vec<u8>, start: u64) -> Result<Frame, CaptureError> {
        if body.len() < 20 {
            return Err(CaptureError::Malformed {
                offset: start,
                reason: "short enhanced packet block",
            });
        }
        let e = self.endian;
        let interface = e.u32(&body[0..4]);
        let ticks = (u64::from(e.u32(&body[4..8])) << 32) | u64::from(e.u32(&body[8..12]));
        let caplen = e.u32(&body[12..16]) as usize;
        let orig_len = e.u32(&body[16..20]);
        if body.len() < 20 + caplen {
            return Err(CaptureError::Malformed {
                offset: start,
                reason: "captured length exceeds block",
            });
        }
        let iface = *self
            .interfaces
            .get(interface as usize)
            .ok_or(CaptureError::UnknownInterface(interface))?;
        let micros = iface.resolution.to_micros(ticks);
        let offset = iface.offset_secs.saturating_mul(1_000_000);
        let micros = if offset >= 0 {
            micros.saturating_add(offset as u64)
        } else {
            micros.saturating_sub(offset.unsigned_abs())
        };
        let mut data = body;
        data.truncate(20 + caplen);
        data.drain(..20);
        Ok(Frame {
            timestamp: Timestamp(micros),
            link_type: iface.link_type,
            interface,
            orig_len,
            data,
        })
    }
}

impl<R: Read> Iterator for CaptureReader<R> {
    type Item = Result<Frame, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let result = match self.format {
            CaptureFormat::Pcap { .. } => self.next_pcap(),
            CaptureFormat::PcapNg => self.next_pcapng(),
        };
        match result {
            Ok(Some(frame)) => Some(Ok(frame)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(err) => {
                self.done = true;
                Some(Err(err))
            }
        }
    }
}

fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}
