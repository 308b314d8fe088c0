//! Labeled packet tables: label derivation from capture file names, loading
//! exported CSVs, balanced group sampling and null removal.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::net::Ipv4Addr;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::packet::{column_name, ExtractedFields, FIELD_KEYS};
use crate::rng::RngStream;

/// The six numeric predictors, in feature-matrix column order.
pub const PREDICTORS: [&str; 6] = ["frame_len", "ip_len", "ip_ttl", "ip_proto", "tcp_srcport", "tcp_dstport"];

/// Columns dropped wholesale before row-wise null removal.
pub const NULL_COLUMNS: [&str; 10] = [
    "tcp_len",
    "tcp_hdr_len",
    "tcp_flags",
    "tcp_window_size_value",
    "tcp_window_size",
    "tcp_window_size_scalefactor",
    "tcp_time_relative",
    "tcp_time_delta",
    "tcp_analysis_bytes_in_flight",
    "tcp_analysis_push_bytes_sent",
];

const LABEL_COLUMNS: [&str; 4] = ["is_malware", "malware_type", "phase", "device"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrafficLabels {
    pub is_malware: u8,
    /// Source token: `bashlite`, `mirai`, `torii`, ...
    pub malware_type: String,
    /// `spread`, `cc` or `leg`.
    pub phase: String,
    pub device: String,
}

impl TrafficLabels {
    /// Sampling group: traffic class plus device, e.g. `mal_lock`.
    pub fn group_key(&self) -> String {
        let traffic = if self.is_malware == 1 { "mal" } else { "leg" };
        format!("{traffic}_{}", self.device)
    }
}

/// Derive labels from a `SOURCE_TRAFFIC[_PHASE]_DEVICE.ext` file name.
///
/// A trailing `_mod` token (the labeled-copy suffix) is ignored.
pub fn derive_labels(file_name: &str) -> Result<TrafficLabels> {
    let naming = |reason: &str| Error::Naming { name: file_name.to_string(), reason: reason.to_string() };
    let base = Path::new(file_name).file_name().and_then(|s| s.to_str()).unwrap_or(file_name);
    let stem = base.rsplit_once('.').map_or(base, |(stem, _)| stem);
    let mut tokens: Vec<&str> = stem.split('_').collect();
    if tokens.len() > 3 && tokens.last() == Some(&"mod") {
        tokens.pop();
    }
    if tokens.len() < 3 {
        return Err(naming("fewer than three '_' separated tokens"));
    }
    if tokens.iter().any(|t| t.is_empty()) {
        return Err(naming("empty token"));
    }

    let source = tokens[0];
    let is_malware = u8::from(tokens[1] == "mal");
    let phase = if is_malware == 0 {
        "leg"
    } else if source == "torii" {
        "spread"
    } else {
        match tokens[2] {
            "spread" => "spread",
            "CC" | "cc" => "cc",
            other => return Err(naming(&format!("unknown phase token {other:?}"))),
        }
    };
    Ok(TrafficLabels {
        is_malware,
        malware_type: source.to_string(),
        phase: phase.to_string(),
        device: tokens[tokens.len() - 1].to_string(),
    })
}

/// One packet's fields plus its derived labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub fields: ExtractedFields,
    /// Last `:` token of `frame_protocols` (`tcp` for `eth:ethertype:ip:tcp`).
    pub frame_protocol_last: String,
    pub labels: TrafficLabels,
}

impl PacketRecord {
    pub fn new(fields: ExtractedFields, labels: TrafficLabels) -> Self {
        let frame_protocol_last = last_protocol(&fields.frame_protocols);
        Self { fields, frame_protocol_last, labels }
    }
}

pub fn last_protocol(chain: &str) -> String {
    chain.trim_matches('"').rsplit(':').next().unwrap_or_default().trim_matches('"').to_string()
}

fn parse_opt<T: FromStr>(raw: &str, column: &str) -> std::result::Result<Option<T>, String> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<T>().map(Some).map_err(|_| format!("column {column}: cannot parse {s:?}"))
}

fn parse_hex_opt(raw: &str, column: &str) -> std::result::Result<Option<u32>, String> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => s.parse::<u32>(),
    };
    parsed.map(Some).map_err(|_| format!("column {column}: cannot parse flags {s:?}"))
}

fn parse_fields(values: &[&str]) -> std::result::Result<ExtractedFields, String> {
    let c = |i: usize| column_name(FIELD_KEYS[i]);
    let ip_flags = parse_hex_opt(values[3], &c(3))?.map(|v| {
        // legacy exports print the whole 16-bit flags/offset word
        if v > 0xff {
            ((v >> 8) as u8) & 0xe0
        } else {
            v as u8
        }
    });
    let tcp_flags = parse_hex_opt(values[12], &c(12))?
        .map(|v| u16::try_from(v).map_err(|_| format!("column {}: flags {v:#x} out of range", c(12))))
        .transpose()?;
    Ok(ExtractedFields {
        frame_len: parse_opt(values[0], &c(0))?.ok_or_else(|| "frame_len is empty".to_string())?,
        frame_protocols: values[1].trim_matches('"').to_string(),
        ip_len: parse_opt(values[2], &c(2))?,
        ip_flags,
        ip_ttl: parse_opt(values[4], &c(4))?,
        ip_proto: parse_opt(values[5], &c(5))?,
        ip_src: parse_opt::<Ipv4Addr>(values[6], &c(6))?,
        ip_dst: parse_opt::<Ipv4Addr>(values[7], &c(7))?,
        tcp_srcport: parse_opt(values[8], &c(8))?,
        tcp_dstport: parse_opt(values[9], &c(9))?,
        tcp_len: parse_opt(values[10], &c(10))?,
        tcp_hdr_len: parse_opt(values[11], &c(11))?,
        tcp_flags,
        tcp_window_size_value: parse_opt(values[13], &c(13))?,
        tcp_window_size: parse_opt(values[14], &c(14))?,
        tcp_window_size_scalefactor: parse_opt(values[15], &c(15))?,
        tcp_time_relative: parse_opt(values[16], &c(16))?,
        tcp_time_delta: parse_opt(values[17], &c(17))?,
        tcp_analysis_bytes_in_flight: parse_opt(values[18], &c(18))?,
        tcp_analysis_push_bytes_sent: parse_opt(values[19], &c(19))?,
    })
}

fn check_field_header(path: &Path, header: &csv::StringRecord, extra: &[&str]) -> Result<()> {
    let expected: Vec<String> =
        FIELD_KEYS.iter().map(|k| column_name(k)).chain(extra.iter().map(|s| s.to_string())).collect();
    let got: Vec<String> = header.iter().map(|h| column_name(h.trim())).collect();
    if got != expected {
        let missing: Vec<&String> = expected.iter().filter(|e| !got.contains(e)).collect();
        return Err(Error::Schema(format!(
            "{}: header does not match the packet field layout (missing: {missing:?}, found {} columns)",
            path.display(),
            got.len()
        )));
    }
    Ok(())
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// Load a field-export CSV, attaching `labels` to every row.
///
/// Accepts dotted (`ip.ttl`) or underscored (`ip_ttl`) header names; empty
/// values become absent fields.
pub fn load_csv(path: &Path, labels: &TrafficLabels) -> Result<Vec<PacketRecord>> {
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    check_field_header(path, &header, &[])?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i as u64 + 2;
        let row = row.map_err(|e| Error::Row { path: path.to_path_buf(), row: row_no, message: e.to_string() })?;
        let values: Vec<&str> = row.iter().collect();
        let fields =
            parse_fields(&values).map_err(|message| Error::Row { path: path.to_path_buf(), row: row_no, message })?;
        out.push(PacketRecord::new(fields, labels.clone()));
    }
    Ok(out)
}

/// Write sampled records (all twenty fields plus labels) for inspection or a
/// later `train` run.
pub fn write_assembled(records: &[PacketRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let header: Vec<String> =
        FIELD_KEYS.iter().map(|k| column_name(k)).chain(LABEL_COLUMNS.iter().map(|s| s.to_string())).collect();
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in records {
        let mut row: Vec<String> = r.fields.csv_values().to_vec();
        row.push(r.labels.is_malware.to_string());
        row.push(r.labels.malware_type.clone());
        row.push(r.labels.phase.clone());
        row.push(r.labels.device.clone());
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_assembled(path: &Path) -> Result<Vec<PacketRecord>> {
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    check_field_header(path, &header, &LABEL_COLUMNS)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i as u64 + 2;
        let row_err = |message: String| Error::Row { path: path.to_path_buf(), row: row_no, message };
        let row = row.map_err(|e| row_err(e.to_string()))?;
        let values: Vec<&str> = row.iter().collect();
        let fields = parse_fields(&values[..20]).map_err(row_err)?;
        let is_malware = match values[20].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(row_err(format!("is_malware must be 0 or 1, got {other:?}"))),
        };
        let labels = TrafficLabels {
            is_malware,
            malware_type: values[21].to_string(),
            phase: values[22].to_string(),
            device: values[23].to_string(),
        };
        out.push(PacketRecord::new(fields, labels));
    }
    Ok(out)
}

/// Records sharing one sampling group (traffic class and device).
#[derive(Debug, Clone, Default)]
pub struct RecordGroup {
    pub name: String,
    pub records: Vec<PacketRecord>,
}

/// Group records by [`TrafficLabels::group_key`], in key order.
pub fn group_records(records: impl IntoIterator<Item = PacketRecord>) -> Vec<RecordGroup> {
    let mut map: BTreeMap<String, Vec<PacketRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.labels.group_key()).or_default().push(r);
    }
    map.into_iter().map(|(name, records)| RecordGroup { name, records }).collect()
}

/// Sample `rows_per_group` rows without replacement from every group and
/// concatenate them. Within a group the sampled rows keep their original
/// relative order.
pub fn assemble(groups: &[RecordGroup], rows_per_group: usize, rng: &mut RngStream) -> Result<Vec<PacketRecord>> {
    if let Some(g) = groups.iter().find(|g| g.records.len() < rows_per_group) {
        return Err(Error::Input(format!(
            "group {} has {} rows, fewer than the {rows_per_group} requested",
            g.name,
            g.records.len()
        )));
    }
    let mut out = Vec::with_capacity(groups.len() * rows_per_group);
    for g in groups {
        let mut idx = rand::seq::index::sample(rng, g.records.len(), rows_per_group).into_vec();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|i| g.records[i].clone()));
    }
    Ok(out)
}

/// Feature matrix, binary labels and auxiliary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub aux: Vec<Option<TrafficLabels>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropSummary {
    pub rows_in: usize,
    pub rows_out: usize,
    pub malicious: usize,
    pub benign: usize,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, features: Matrix, labels: Vec<u8>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!("{} feature rows but {} labels", features.rows(), labels.len())));
        }
        if features.cols() != feature_names.len() {
            return Err(Error::Shape(format!("{} feature columns but {} names", features.cols(), feature_names.len())));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Input("labels must be 0 or 1".into()));
        }
        let aux = vec![None; labels.len()];
        Ok(Self { feature_names, features, labels, aux })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn malicious(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            aux: idx.iter().map(|&i| self.aux[i].clone()).collect(),
        }
    }

    pub fn slice(&self, range: Range<usize>) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            features: self.features.slice_rows(range.start, range.end),
            labels: self.labels[range.clone()].to_vec(),
            aux: self.aux[range].to_vec(),
        }
    }

    /// Write the numeric table: feature columns then `is_malware`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = self.feature_names.clone();
        header.push("is_malware".into());
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for r in 0..self.len() {
            let mut row: Vec<String> = self.features.row(r).iter().map(|v| v.to_string()).collect();
            row.push(self.labels[r].to_string());
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Read a numeric table written by [`write_csv`](Self::write_csv): every
    /// column but `is_malware` is a feature, and no value may be empty.
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut reader = open_reader(path)?;
        let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let label_col = header
            .iter()
            .position(|h| h.trim() == "is_malware")
            .ok_or_else(|| Error::Schema(format!("{}: no is_malware column", path.display())))?;
        let names: Vec<String> =
            header.iter().enumerate().filter(|&(i, _)| i != label_col).map(|(_, h)| h.trim().to_string()).collect();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row_no = i as u64 + 2;
            let row_err = |message: String| Error::Row { path: path.to_path_buf(), row: row_no, message };
            let row = row.map_err(|e| row_err(e.to_string()))?;
            for (j, v) in row.iter().enumerate() {
                if j == label_col {
                    labels.push(match v.trim() {
                        "0" => 0,
                        "1" => 1,
                        other => return Err(row_err(format!("is_malware must be 0 or 1, got {other:?}"))),
                    });
                } else {
                    let x: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| row_err(format!("column {}: cannot parse {v:?}", header[j].trim())))?;
                    if !x.is_finite() {
                        return Err(row_err(format!("column {}: non-finite value", header[j].trim())));
                    }
                    data.push(x);
                }
            }
        }
        let features = Matrix::from_vec(labels.len(), names.len(), data)?;
        Dataset::new(names, features, labels)
    }
}

/// True when the CSV at `path` uses the packet-field layout rather than a
/// plain numeric table.
pub fn is_packet_table(path: &Path) -> Result<bool> {
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?;
    Ok(header.iter().any(|h| column_name(h.trim()) == "frame_protocols"))
}

/// Drop the null-heavy TCP columns, then every row with an absent value in
/// the remaining columns, and keep the six predictors as features.
pub fn drop_nulls(records: &[PacketRecord]) -> (Dataset, DropSummary) {
    let mut data = Vec::with_capacity(records.len() * PREDICTORS.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut aux = Vec::with_capacity(records.len());
    for r in records {
        let f = &r.fields;
        let row = (|| {
            // remaining non-predictor columns must be present too
            f.ip_flags?;
            f.ip_src?;
            f.ip_dst?;
            if f.frame_protocols.is_empty() {
                return None;
            }
            Some([
                f64::from(f.frame_len),
                f64::from(f.ip_len?),
                f64::from(f.ip_ttl?),
                f64::from(f.ip_proto?),
                f64::from(f.tcp_srcport?),
                f64::from(f.tcp_dstport?),
            ])
        })();
        if let Some(row) = row {
            data.extend_from_slice(&row);
            labels.push(r.labels.is_malware);
            aux.push(Some(r.labels.clone()));
        }
    }
    let malicious = labels.iter().filter(|&&l| l == 1).count();
    let summary =
        DropSummary { rows_in: records.len(), rows_out: labels.len(), malicious, benign: labels.len() - malicious };
    let dataset = Dataset {
        feature_names: PREDICTORS.iter().map(|s| s.to_string()).collect(),
        features: Matrix::from_vec(labels.len(), PREDICTORS.len(), data).expect("row width is fixed"),
        labels,
        aux,
    };
    (dataset, summary)
}
