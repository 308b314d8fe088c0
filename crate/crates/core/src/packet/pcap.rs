//! Classic libpcap reader (24-byte global header, 16-byte record headers).

use std::fs::File;
use std::io::{BufReader, ErrorKind, Read};
use std::path::Path;

use crate::error::{Error, Result};

pub const LINKTYPE_ETHERNET: u32 = 1;

/// Upper bound on a single record; anything larger is a corrupt header.
const MAX_RECORD_LEN: u32 = 256 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Big,
    Little,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimestampUnit {
    Micro,
    Nano,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureHeader {
    /// Magic as it would read in the file's own byte order.
    pub magic: u32,
    pub byte_order: ByteOrder,
    pub timestamp_unit: TimestampUnit,
    pub version_major: u16,
    pub version_minor: u16,
    pub snaplen: u32,
    pub link_type: u32,
}

impl CaptureHeader {
    pub fn is_ethernet(&self) -> bool {
        self.link_type == LINKTYPE_ETHERNET
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacketView {
    pub ts_sec: u32,
    /// Microseconds or nanoseconds, per [`CaptureHeader::timestamp_unit`].
    pub ts_frac: u32,
    pub captured_len: u32,
    pub original_len: u32,
    pub payload: Vec<u8>,
}

impl ByteOrder {
    fn u16(self, b: [u8; 2]) -> u16 {
        match self {
            ByteOrder::Big => u16::from_be_bytes(b),
            ByteOrder::Little => u16::from_le_bytes(b),
        }
    }

    fn u32(self, b: [u8; 4]) -> u32 {
        match self {
            ByteOrder::Big => u32::from_be_bytes(b),
            ByteOrder::Little => u32::from_le_bytes(b),
        }
    }
}

fn parse_header(buf: &[u8; 24]) -> Result<CaptureHeader> {
    let magic_le = u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]);
    let (byte_order, timestamp_unit) = match magic_le {
        0xa1b2_c3d4 => (ByteOrder::Little, TimestampUnit::Micro),
        0xd4c3_b2a1 => (ByteOrder::Big, TimestampUnit::Micro),
        0xa1b2_3c4d => (ByteOrder::Little, TimestampUnit::Nano),
        0x4d3c_b2a1 => (ByteOrder::Big, TimestampUnit::Nano),
        other => return Err(Error::Format(format!("unknown pcap magic 0x{other:08x}"))),
    };
    let bo = byte_order;
    Ok(CaptureHeader {
        magic: bo.u32([buf[0], buf[1], buf[2], buf[3]]),
        byte_order,
        timestamp_unit,
        version_major: bo.u16([buf[4], buf[5]]),
        version_minor: bo.u16([buf[6], buf[7]]),
        snaplen: bo.u32([buf[16], buf[17], buf[18], buf[19]]),
        link_type: bo.u32([buf[20], buf[21], buf[22], buf[23]]) & 0x0fff_ffff,
    })
}

/// Fill `buf` completely, or report how many bytes were available before EOF.
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

/// Streaming reader over any byte source.
pub struct CaptureReader<R> {
    reader: R,
    header: CaptureHeader,
    next_index: usize,
    done: bool,
}

impl<R: Read> CaptureReader<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let mut buf = [0u8; 24];
        let n = read_full(&mut reader, &mut buf).map_err(|e| Error::Format(format!("reading pcap header: {e}")))?;
        if n < 24 {
            return Err(Error::Format(format!("pcap header needs 24 bytes, file has {n}")));
        }
        Ok(Self { reader, header: parse_header(&buf)?, next_index: 0, done: false })
    }

    pub fn header(&self) -> &CaptureHeader {
        &self.header
    }

    fn read_record(&mut self) -> Result<Option<RawPacketView>> {
        let index = self.next_index;
        let mut hdr = [0u8; 16];
        let n = read_full(&mut self.reader, &mut hdr).map_err(|e| Error::Format(format!("packet {index}: {e}")))?;
        if n == 0 {
            return Ok(None);
        }
        if n < 16 {
            return Err(Error::Truncated { index, layer: "pcap record", needed: 16, available: n });
        }
        let bo = self.header.byte_order;
        let word = |i: usize| bo.u32([hdr[i], hdr[i + 1], hdr[i + 2], hdr[i + 3]]);
        let (ts_sec, ts_frac, captured_len, original_len) = (word(0), word(4), word(8), word(12));
        if captured_len > MAX_RECORD_LEN {
            return Err(Error::Format(format!("packet {index}: implausible captured length {captured_len}")));
        }
        if captured_len > original_len {
            return Err(Error::Format(format!(
                "packet {index}: captured length {captured_len} exceeds original length {original_len}"
            )));
        }
        let mut payload = vec![0u8; captured_len as usize];
        let got =
            read_full(&mut self.reader, &mut payload).map_err(|e| Error::Format(format!("packet {index}: {e}")))?;
        if got < payload.len() {
            return Err(Error::Truncated { index, layer: "pcap record", needed: payload.len(), available: got });
        }
        self.next_index += 1;
        Ok(Some(RawPacketView { ts_sec, ts_frac, captured_len, original_len, payload }))
    }
}

impl<R: Read> Iterator for CaptureReader<R> {
    type Item = Result<RawPacketView>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_record() {
            Ok(Some(p)) => Some(Ok(p)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Open a capture file and parse its global header.
pub fn open_capture(path: &Path) -> Result<CaptureReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    CaptureReader::new(BufReader::new(file)).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
