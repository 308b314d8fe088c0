use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::ExperimentConfig;
use crate::dataset::{
    assemble, derive_labels, drop_nulls, group_records, is_packet_table, load_assembled, load_csv, write_assembled,
    Dataset, DropSummary, PacketRecord,
};
use crate::error::{Error, Result};
use crate::packet::{convert_capture, emit_csv, SkipCounts};
use crate::preprocess::{fit_scaler, split, transform, ScalerParams};
use crate::rng::{streams, RngStream};

#[derive(Debug)]
pub struct FileFailure {
    pub path: PathBuf,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct ExtractSummary {
    pub written: Vec<PathBuf>,
    pub packets: usize,
    pub skipped_packets: SkipCounts,
    /// Inputs that are not pcap files.
    pub not_pcap: Vec<PathBuf>,
    pub failures: Vec<FileFailure>,
}

fn list_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            out.extend(entries);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")));
        }
    }
    Ok(out)
}

/// Convert every capture among `inputs` (files or directories) into
/// `out_dir/<stem>.csv`. Files that fail are collected, not fatal.
pub fn extract_paths(inputs: &[PathBuf], out_dir: &Path) -> Result<ExtractSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut summary = ExtractSummary::default();
    for path in list_files(inputs)? {
        let conv = match convert_capture(&path) {
            Ok(c) => c,
            Err(Error::Format(m)) if m.contains("pcap magic") || m.contains("pcap header") => {
                log::warn!("skipping {}: not a pcap file", path.display());
                summary.not_pcap.push(path);
                continue;
            }
            Err(error) => {
                summary.failures.push(FileFailure { path, error });
                continue;
            }
        };
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let out = out_dir.join(format!("{stem}.csv"));
        if let Err(error) = emit_csv(&conv.records, &out) {
            summary.failures.push(FileFailure { path, error });
            continue;
        }
        summary.packets += conv.records.len();
        summary.skipped_packets.ipv6 += conv.skipped.ipv6;
        summary.skipped_packets.vlan += conv.skipped.vlan;
        summary.skipped_packets.non_ethernet += conv.skipped.non_ethernet;
        summary.written.push(out);
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct AssembleSummary {
    pub files: usize,
    pub groups: Vec<(String, usize)>,
    pub rows: usize,
}

/// Load every `*.csv` in `dir` (labels from the file names), group, and
/// sample `rows_per_group` rows per group.
pub fn collect_records(
    dir: &Path,
    rows_per_group: usize,
    seed: u64,
    required: &[String],
) -> Result<(Vec<PacketRecord>, AssembleSummary)> {
    let files: Vec<PathBuf> = list_files(&[dir.to_path_buf()])?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    if files.is_empty() {
        return Err(Error::Input(format!("{} holds no CSV files", dir.display())));
    }
    let mut records = Vec::new();
    for f in &files {
        let name = f.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let labels = derive_labels(&name)?;
        records.extend(load_csv(f, &labels)?);
    }
    let groups = group_records(records);
    let present: BTreeSet<&str> = groups.iter().map(|g| g.name.as_str()).collect();
    let missing: Vec<&String> = required.iter().filter(|r| !present.contains(r.as_str())).collect();
    if !missing.is_empty() {
        return Err(Error::Input(format!(
            "missing group(s): {}",
            missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    let sampled = assemble(&groups, rows_per_group, &mut RngStream::new(seed, streams::ASSEMBLE))?;
    let summary = AssembleSummary {
        files: files.len(),
        groups: groups.iter().map(|g| (g.name.clone(), g.records.len())).collect(),
        rows: sampled.len(),
    };
    Ok((sampled, summary))
}

/// `assemble` subcommand: sample the CSV directory and write the packet table.
pub fn assemble_dir(
    dir: &Path,
    rows_per_group: usize,
    seed: u64,
    required: &[String],
    out: &Path,
) -> Result<AssembleSummary> {
    let (records, summary) = collect_records(dir, rows_per_group, seed, required)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_assembled(&records, out)?;
    Ok(summary)
}

/// Load the configured input as a numeric dataset. Packet tables go through
/// the null drop; the summary is returned for them.
pub fn load_dataset(config: &ExperimentConfig) -> Result<(Dataset, Option<DropSummary>)> {
    let input = config.input.as_deref().ok_or_else(|| Error::Config(vec!["input is not set".into()]))?;
    if input.is_dir() {
        let (records, _) = collect_records(input, config.rows_per_group, config.seed, &[])?;
        let (ds, drop) = drop_nulls(&records);
        return Ok((ds, Some(drop)));
    }
    if is_packet_table(input)? {
        let (ds, drop) = drop_nulls(&load_assembled(input)?);
        Ok((ds, Some(drop)))
    } else {
        Ok((Dataset::read_csv(input)?, None))
    }
}

/// Scaled train/test splits ready for federation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub scaler: ScalerParams,
    pub drop: Option<DropSummary>,
    pub rows: usize,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let (ds, drop) = load_dataset(config)?;
    if ds.is_empty() {
        return Err(Error::Input("dataset has no rows after dropping nulls".into()));
    }
    let rows = ds.len();
    let scale = |d: &Dataset, s: &ScalerParams| -> Result<Dataset> {
        let mut d = d.clone();
        d.features = transform(s, &d.features)?;
        Ok(d)
    };
    let (train, test, scaler) = if config.scale_on_train_only {
        let parts = split(&ds, config.test_fraction, config.seed)?;
        let scaler = fit_scaler(&parts.train.features)?;
        (scale(&parts.train, &scaler)?, scale(&parts.test, &scaler)?, scaler)
    } else {
        let scaler = fit_scaler(&ds.features)?;
        let parts = split(&scale(&ds, &scaler)?, config.test_fraction, config.seed)?;
        (parts.train, parts.test, scaler)
    };
    Ok(Prepared { train, test, scaler, drop, rows })
}
