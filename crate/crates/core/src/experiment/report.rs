use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::dataset::DropSummary;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

/// Contents of one `report_repNN.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub null_drop: Option<DropSummary>,
    pub report: MetricsReport,
}

impl ReportFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// One line of the summary table: final-iteration training scores and the
/// test evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub flipped: Option<usize>,
}

/// Per-experiment rows followed by an `Average` row.
pub fn summary_rows(reports: &[MetricsReport]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = reports
        .iter()
        .map(|r| {
            let last = r.final_iteration();
            SummaryRow {
                experiment: r.experiment.to_string(),
                accuracy: last.map_or(0.0, |i| i.accuracy),
                precision: last.map_or(0.0, |i| i.precision),
                recall: last.map_or(0.0, |i| i.recall),
                f1: last.map_or(0.0, |i| i.f1),
                test_accuracy: r.test.accuracy,
                test_loss: r.test.loss,
                flipped: r.attack.map(|a| a.changed),
            }
        })
        .collect();
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let mean = |f: fn(&SummaryRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let flips: Vec<usize> = rows.iter().filter_map(|r| r.flipped).collect();
        let avg = SummaryRow {
            experiment: "Average".into(),
            accuracy: mean(|r| r.accuracy),
            precision: mean(|r| r.precision),
            recall: mean(|r| r.recall),
            f1: mean(|r| r.f1),
            test_accuracy: mean(|r| r.test_accuracy),
            test_loss: mean(|r| r.test_loss),
            flipped: (!flips.is_empty())
                .then(|| (flips.iter().sum::<usize>() as f64 / flips.len() as f64).round() as usize),
        };
        rows.push(avg);
    }
    rows
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Plain-text table of [`summary_rows`], percentages with two decimals.
pub fn summarize(reports: &[MetricsReport]) -> String {
    let mut out = format!(
        "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}\n",
        "experiment", "accuracy", "precision", "recall", "f1", "test_acc", "test_loss", "flipped"
    );
    let pct = |v: f64| format!("{:.2}%", v * 100.0);
    for r in summary_rows(reports) {
        out.push_str(&format!(
            "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}\n",
            r.experiment,
            pct(r.accuracy),
            pct(r.precision),
            pct(r.recall),
            pct(r.f1),
            pct(r.test_accuracy),
            pct(r.test_loss),
            r.flipped.map_or("-".to_string(), |f| f.to_string()),
        ));
    }
    out
}

/// Read every `report_*.json` in `dir`, ordered by experiment id.
pub fn load_reports(dir: &Path) -> Result<Vec<ReportFile>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("report_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no report_*.json files in {}", dir.display())));
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        out.push(serde_json::from_str(&text).map_err(|e| Error::json(&p, e))?);
    }
    let mut out: Vec<ReportFile> = out;
    out.sort_by_key(|r| r.report.experiment);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::FlipOutcome;
    use crate::metrics::{IterationMetrics, TestMetrics};

    fn report(id: usize, acc: f64, changed: Option<usize>) -> MetricsReport {
        MetricsReport {
            experiment: id,
            seed: 0,
            config_hash: String::new(),
            pretrain_loss: None,
            iterations: vec![IterationMetrics {
                experiment: id,
                iteration: 1,
                accuracy: acc,
                precision: acc,
                recall: acc,
                f1: acc,
                loss: 0.5,
                client_losses: vec![],
                undefined: false,
            }],
            test: TestMetrics { accuracy: acc, loss: 0.5, precision: acc, recall: acc, f1: acc, undefined: false },
            attack: changed.map(|c| FlipOutcome { matched: c, changed: c }),
            warnings: vec![],
        }
    }

    #[test]
    fn average_row() {
        let rows = summary_rows(&[report(1, 0.6, Some(10)), report(2, 0.8, Some(11))]);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].experiment, "Average");
        assert!((rows[2].accuracy - 0.7).abs() < 1e-15);
        assert_eq!(rows[2].flipped, Some(11));
        assert!(summarize(&[report(1, 0.5, None)]).contains("50.00%"));
    }
}
