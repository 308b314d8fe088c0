//! Packet capture to per-packet feature rows.

mod export;
mod extract;
mod pcap;

use std::path::Path;

pub use export::{column_name, emit_csv, write_csv, FIELD_KEYS};
pub use extract::{extract, Extracted, ExtractedFields, SkipReason};
pub use pcap::{
    open_capture, ByteOrder, CaptureHeader, CaptureReader, RawPacketView, TimestampUnit, LINKTYPE_ETHERNET,
};

use crate::error::Result;

/// Packets left out of a conversion, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipCounts {
    pub ipv6: usize,
    pub vlan: usize,
    /// Packets in a capture whose link type is not Ethernet.
    pub non_ethernet: usize,
}

impl SkipCounts {
    pub fn total(&self) -> usize {
        self.ipv6 + self.vlan + self.non_ethernet
    }
}

#[derive(Debug, Clone, Default)]
pub struct Conversion {
    pub records: Vec<ExtractedFields>,
    pub skipped: SkipCounts,
}

/// Extract every packet of an already-opened capture.
///
/// Stops at the first malformed or truncated packet; the error carries the
/// packet index.
pub fn convert_reader<R: std::io::Read>(reader: CaptureReader<R>) -> Result<Conversion> {
    let mut out = Conversion::default();
    let ethernet = reader.header().is_ethernet();
    let link = reader.header().link_type;
    for (index, packet) in reader.enumerate() {
        let packet = packet?;
        if !ethernet {
            out.skipped.non_ethernet += 1;
            continue;
        }
        match extract(&packet).map_err(|e| e.at_packet(index))? {
            Extracted::Record(r) => out.records.push(r),
            Extracted::Skipped(SkipReason::Ipv6) => out.skipped.ipv6 += 1,
            Extracted::Skipped(SkipReason::Vlan) => out.skipped.vlan += 1,
        }
    }
    if out.skipped.non_ethernet > 0 {
        log::warn!("link type {link} is not Ethernet; skipped {} packets", out.skipped.non_ethernet);
    }
    Ok(out)
}

pub fn convert_capture(path: &Path) -> Result<Conversion> {
    convert_reader(open_capture(path)?)
}
