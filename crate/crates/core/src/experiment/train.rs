use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::report::{summary_rows, write_summary_csv, ReportFile, SummaryRow};
use super::{prepare, ExperimentConfig};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, with_threads, ExecMode};
use crate::federation::{run_experiment, RunOptions};
use crate::metrics::{write_iteration_csv, MetricsReport};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Worker threads; `None` uses the pool default.
    pub threads: Option<usize>,
    pub exec: ExecMode,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub reports: Vec<MetricsReport>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

/// Wall-clock facts about a run, kept out of the report files so those stay
/// byte-identical across reruns.
#[derive(Serialize)]
struct RunInfo {
    generated_at: u64,
    elapsed_seconds: f64,
    threads: Option<usize>,
    exec: ExecMode,
    config_hash: String,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Run `repetitions` seeded experiments and write reports, the
/// per-iteration CSV, the summary table and the effective config.
pub fn run_train(config: &ExperimentConfig, options: TrainOptions) -> Result<TrainSummary> {
    config.validate()?;
    let started = Instant::now();
    let prepared = prepare(config)?;
    let hash = config.hash();
    let attack = config.attack.spec();
    let checkpoints = config.checkpoint.then(|| config.output_dir.join("checkpoints"));
    log::info!(
        "{} rows ({} train / {} test), {} repetition(s)",
        prepared.rows,
        prepared.train.len(),
        prepared.test.len(),
        config.repetitions
    );

    let results = with_threads(options.threads, || {
        map_indexed(options.exec, config.repetitions, |rep| {
            let fed = config.federation(derive_seed(config.seed, rep as u64));
            let run = RunOptions {
                exec: options.exec,
                experiment_id: rep + 1,
                config_hash: hash.clone(),
                checkpoint_dir: checkpoints.clone(),
            };
            run_experiment(&prepared.train, &prepared.test, &fed, attack.as_ref(), Some(&prepared.scaler), &run)
        })
    });
    let reports: Vec<MetricsReport> = results.into_iter().map(|r| r.map(|o| o.report)).collect::<Result<_>>()?;

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for r in &reports {
        let file = ReportFile {
            config_hash: hash.clone(),
            config: config.clone(),
            rows: prepared.rows,
            train_rows: prepared.train.len(),
            test_rows: prepared.test.len(),
            null_drop: prepared.drop,
            report: r.clone(),
        };
        let path = dir.join(format!("report_rep{:02}.json", r.experiment));
        write(&path, &file.to_json())?;
        files.push(path);
    }

    let iter_path = dir.join("iterations.csv");
    let f = std::fs::File::create(&iter_path).map_err(|e| Error::io(&iter_path, e))?;
    write_iteration_csv(&reports, std::io::BufWriter::new(f)).map_err(|e| Error::csv(&iter_path, e))?;
    files.push(iter_path);

    let summary = summary_rows(&reports);
    let summary_path = dir.join("summary.csv");
    write_summary_csv(&summary, &summary_path)?;
    files.push(summary_path);

    let cfg_path = dir.join("effective_config.toml");
    write(&cfg_path, &config.to_toml())?;
    files.push(cfg_path);

    let info = RunInfo {
        generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        elapsed_seconds: started.elapsed().as_secs_f64(),
        threads: options.threads,
        exec: options.exec,
        config_hash: hash,
    };
    let info_path = dir.join("run.json");
    write(&info_path, &serde_json::to_string_pretty(&info).expect("run info serializes"))?;
    files.push(info_path);

    Ok(TrainSummary { reports, summary, files })
}
