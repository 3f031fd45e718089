//! Minimal PCAP and PCAPNG writers.

use std::io::{self, Write};

use super::{LinkType, Timestamp};

#[derive(Debug, Clone, Copy, Default)]
pub struct PcapOptions {
    pub nanosecond: bool,
    pub big_endian: bool,
}

/// Classic PCAP writer.
pub struct PcapWriter<W: Write> {
    out: W,
    options: PcapOptions,
}

impl<W: Write> PcapWriter<W> {
    /// Little-endian, microsecond-resolution file with a 65535 snap length.
    pub fn new(out: W, link_type: LinkType) -> io::Result<Self> {
        Self::with_options(out, link_type, PcapOptions::default())
    }

    pub fn with_options(out: W, link_type: LinkType, options: PcapOptions) -> io::Result<Self> {
        let mut w = PcapWriter { out, options };
        let magic: u32 = if options.nanosecond { 0xa1b2_3c4d } else { 0xa1b2_c3d4 };
        w.put_u32(magic)?;
        w.put_u16(2)?;
        w.put_u16(4)?;
        w.put_u32(0)?;
        w.put_u32(0)?;
        w.put_u32(65535)?;
        w.put_u32(link_type.code())?;
        Ok(w)
    }

    fn put_u16(&mut self, v: u16) -> io::Result<()> {
        let b = if self.options.big_endian {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        };
        self.out.write_all(&b)
    }

    fn put_u32(&mut self, v: u32) -> io::Result<()> {
        let b = if self.options.big_endian {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        };
        self.out.write_all(&b)
    }

    pub fn write_packet(&mut self, ts: Timestamp, data: &[u8]) -> io::Result<()> {
        let secs = (ts.micros() / 1_000_000) as u32;
        let micros = (ts.micros() % 1_000_000) as u32;
        let frac = if self.options.nanosecond { micros * 1000 } else { micros };
        self.put_u32(secs)?;
        self.put_u32(frac)?;
        self.put_u32(data.len() as u32)?;
        self.put_u32(data.len() as u32)?;
        self.out.write_all(data)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Little-endian PCAPNG writer (one section).
pub struct PcapNgWriter<W: Write> {
    out: W,
    interfaces: u32,
}

impl<W: Write> PcapNgWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        let mut body = Vec::new();
        body.extend_from_slice(&0x1a2b_3c4du32.to_le_bytes());
        body.extend_from_slice(&1u16.to_le_bytes());
        body.extend_from_slice(&0u16.to_le_bytes());
        body.extend_from_slice(&(-1i64).to_le_bytes());
        write_block(&mut out, 0x0a0d_0d0a, &body)?;
        Ok(PcapNgWriter { out, interfaces: 0 })
    }

    /// Declares an interface; `tsresol` is the raw `if_tsresol` option byte
    /// (absent means microseconds). Returns the interface id.
    pub fn add_interface(&mut self, link_type: LinkType, tsresol: Option<u8>) -> io::Result<u32> {
        let mut body = Vec::new();
        body.extend_from_slice(&(link_type.code() as u16).to_le_bytes());
        body.extend_from_slice(&0u16.to_le_bytes());
        body.extend_from_slice(&65535u32.to_le_bytes());
        if let Some(res) = tsresol {
            body.extend_from_slice(&9u16.to_le_bytes());
            body.extend_from_slice(&1u16.to_le_bytes());
            body.extend_from_slice(&[res, 0, 0, 0]);
            body.extend_from_slice(&[0, 0, 0, 0]);
        }
        write_block(&mut self.out, 1, &body)?;
        self.interfaces += 1;
        Ok(self.interfaces - 1)
    }

    /// Writes an enhanced packet block; `ticks` are in the interface's resolution.
    pub fn write_packet(&mut self, interface: u32, ticks: u64, data: &[u8]) -> io::Result<()> {
        let mut body = Vec::with_capacity(20 + data.len() + 3);
        body.extend_from_slice(&interface.to_le_bytes());
        body.extend_from_slice(&((ticks >> 32) as u32).to_le_bytes());
        body.extend_from_slice(&(ticks as u32).to_le_bytes());
        body.extend_from_slice(&(data.len() as u32).to_le_bytes());
        body.extend_from_slice(&(data.len() as u32).to_le_bytes());
        body.extend_from_slice(data);
        while body.len() % 4 != 0 {
            body.push(0);
        }
        write_block(&mut self.out, 6, &body)
    }

    /// Writes an arbitrary block, e.g. to check that unknown types are skipped.
    pub fn write_raw_block(&mut self, block_type: u32, body: &[u8]) -> io::Result<()> {
        write_block(&mut self.out, block_type, body)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn write_block<W: Write>(out: &mut W, block_type: u32, body: &[u8]) -> io::Result<()> {
    assert!(body.len().is_multiple_of(4), "pcapng block body must be 32-bit aligned");
    let total = (body.len() + 12) as u32;
    out.write_all(&block_type.to_le_bytes())?;
    out.write_all(&total.to_le_bytes())?;
    out.write_all(body)?;
    out.write_all(&total.to_le_bytes())
}
