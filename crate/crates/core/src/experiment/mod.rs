//! Command-level drivers: capture extraction, dataset assembly, repeated
//! training runs and report summaries.

mod config;
mod prepare;
mod report;
mod train;

pub use config::{AttackConfig, AttackMode, ExperimentConfig};
pub use prepare::{
    assemble_dir, collect_records, extract_paths, load_dataset, prepare, AssembleSummary, ExtractSummary, FileFailure,
    Prepared,
};
pub use report::{load_reports, summarize, summary_rows, write_summary_csv, ReportFile, SummaryRow};
pub use train::{run_train, TrainOptions, TrainSummary};
