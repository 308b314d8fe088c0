//! Field-export CSV: header row of the twenty keys, every value double
//! quoted, absent values as `""`, `\n` line endings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::packet::ExtractedFields;

pub const FIELD_KEYS: [&str; 20] = [
    "frame.len",
    "frame.protocols",
    "ip.len",
    "ip.flags",
    "ip.ttl",
    "ip.proto",
    "ip.src",
    "ip.dst",
    "tcp.srcport",
    "tcp.dstport",
    "tcp.len",
    "tcp.hdr_len",
    "tcp.flags",
    "tcp.window_size_value",
    "tcp.window_size",
    "tcp.window_size_scalefactor",
    "tcp.time_relative",
    "tcp.time_delta",
    "tcp.analysis.bytes_in_flight",
    "tcp.analysis.push_bytes_sent",
];

/// Column name used once the dotted key is loaded into a table
/// (`tcp.analysis.bytes_in_flight` -> `tcp_analysis_bytes_in_flight`).
pub fn column_name(key: &str) -> String {
    key.replace('.', "_")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExtractedFields {
    pub fn csv_values(&self) -> [String; 20] {
        [
            self.frame_len.to_string(),
            self.frame_protocols.clone(),
            opt(self.ip_len),
            self.ip_flags.map(|f| format!("0x{f:02x}")).unwrap_or_default(),
            opt(self.ip_ttl),
            opt(self.ip_proto),
            opt(self.ip_src),
            opt(self.ip_dst),
            opt(self.tcp_srcport),
            opt(self.tcp_dstport),
            opt(self.tcp_len),
            opt(self.tcp_hdr_len),
            self.tcp_flags.map(|f| format!("0x{f:04x}")).unwrap_or_default(),
            opt(self.tcp_window_size_value),
            opt(self.tcp_window_size),
            opt(self.tcp_window_size_scalefactor),
            opt(self.tcp_time_relative),
            opt(self.tcp_time_delta),
            opt(self.tcp_analysis_bytes_in_flight),
            opt(self.tcp_analysis_push_bytes_sent),
        ]
    }
}

pub fn write_csv<'a, W: Write>(records: impl IntoIterator<Item = &'a ExtractedFields>, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Always)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(FIELD_KEYS)?;
    for r in records {
        w.write_record(r.csv_values())?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv<'a>(records: impl IntoIterator<Item = &'a ExtractedFields>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(records, BufWriter::new(file)).map_err(|e| Error::csv(path, e))
}
