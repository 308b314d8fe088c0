//! `fedids`: extract captures, assemble datasets, run federated experiments
//! and summarize their reports.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fedids_core::exec::ExecMode;
use fedids_core::experiment::{self, AttackMode, ExperimentConfig, TrainOptions};
use fedids_core::synth::{blobs, BlobConfig};
use fedids_core::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "fedids", version, about = "Federated per-packet botnet detection workbench")]
struct Cli {
    /// Worker thread cap for parallel sections.
    #[arg(long, global = true, env = "FEDIDS_THREADS")]
    threads: Option<usize>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert pcap captures to field CSVs, one per capture.
    Extract {
        /// Capture files or directories holding them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        out_dir: PathBuf,
    },
    /// Sample a fixed number of rows per traffic group from a CSV directory.
    Assemble {
        csv_dir: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        rows_per_group: usize,
        #[arg(long, default_value_t = 123)]
        seed: u64,
        /// Fail unless this group (e.g. `mal_lock`) is present. Repeatable.
        #[arg(long = "require-group")]
        require_group: Vec<String>,
    },
    /// Run repeated federated experiments and write reports.
    Train(Box<TrainArgs>),
    /// Print the summary table of a finished `train` output directory.
    Report {
        dir: PathBuf,
        /// Print the per-experiment JSON summary rows instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic two-blob feature table for smoke runs.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        #[arg(long, default_value_t = 4.0)]
        separation: f64,
        #[arg(long, default_value_t = 0.0)]
        telnet_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Precedence: built-in defaults, then `--config`, then `--set`, then the
/// dedicated flags below.
#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Generic override, `key=value` (e.g. `attack.port=80`). Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    n_clients: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    rows_per_group: Option<usize>,
    #[arg(long)]
    server_pretrain_fraction: Option<f64>,
    /// Sample this many clients per round (default: all).
    #[arg(long)]
    clients_per_round: Option<usize>,
    /// Pretrain the server on the first rows (overlapping client 0).
    #[arg(long)]
    overlap: bool,
    #[arg(long)]
    scale_on_train_only: bool,
    /// Write the aggregated model after every round.
    #[arg(long)]
    checkpoint: bool,
    /// Run clients and repetitions sequentially.
    #[arg(long)]
    serial: bool,
    #[arg(long = "attack.enabled")]
    attack_enabled: bool,
    #[arg(long = "attack.client")]
    attack_client: Option<usize>,
    #[arg(long = "attack.port")]
    attack_port: Option<u16>,
    #[arg(long = "attack.mode", value_parser = parse_mode)]
    attack_mode: Option<AttackMode>,
    #[arg(long = "attack.value")]
    attack_value: Option<f64>,
    #[arg(long = "attack.decimals")]
    attack_decimals: Option<u32>,
}

fn parse_mode(s: &str) -> Result<AttackMode, String> {
    match s {
        "raw" => Ok(AttackMode::Raw),
        "scaled" => Ok(AttackMode::Scaled),
        other => Err(format!("expected raw or scaled, got {other:?}")),
    }
}

impl TrainArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        c.apply_overrides(&self.set)?;
        macro_rules! take {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$($field).+ = v; })*
            };
        }
        take!(
            output_dir => output_dir,
            repetitions => repetitions,
            iterations => iterations,
            epochs => epochs,
            batch_size => batch_size,
            learning_rate => learning_rate,
            n_clients => n_clients,
            seed => seed,
            test_fraction => test_fraction,
            rows_per_group => rows_per_group,
            attack_client => attack.client,
            attack_port => attack.port,
            attack_mode => attack.mode,
            attack_value => attack.value,
            attack_decimals => attack.decimals,
        );
        if self.input.is_some() {
            c.input = self.input.clone();
        }
        if self.clients_per_round.is_some() {
            c.clients_per_round = self.clients_per_round;
        }
        if self.server_pretrain_fraction.is_some() {
            c.server_pretrain_fraction = self.server_pretrain_fraction;
        }
        c.overlap |= self.overlap;
        c.scale_on_train_only |= self.scale_on_train_only;
        c.checkpoint |= self.checkpoint;
        c.attack.enabled |= self.attack_enabled;
        Ok(c)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Extract { inputs, out_dir } => {
            let s = experiment::extract_paths(&inputs, &out_dir)?;
            if s.written.is_empty() && s.failures.is_empty() {
                eprintln!("warning: 0 files converted");
            }
            for p in &s.not_pcap {
                eprintln!("warning: skipped {} (not a pcap file)", p.display());
            }
            println!(
                "converted {} file(s), {} packet(s); skipped {} IPv6, {} VLAN, {} non-Ethernet packet(s); {} non-pcap file(s)",
                s.written.len(),
                s.packets,
                s.skipped_packets.ipv6,
                s.skipped_packets.vlan,
                s.skipped_packets.non_ethernet,
                s.not_pcap.len()
            );
            for f in &s.failures {
                eprintln!("error: {}: {}", f.path.display(), f.error);
            }
            if let Some(first) = s.failures.into_iter().next() {
                return Err(first.error).context("some captures could not be converted");
            }
        }
        Command::Assemble { csv_dir, out, rows_per_group, seed, require_group } => {
            let s = experiment::assemble_dir(&csv_dir, rows_per_group, seed, &require_group, &out)?;
            for (name, n) in &s.groups {
                log::info!("group {name}: {n} rows available");
            }
            println!(
                "sampled {} rows from {} group(s) in {} file(s) into {}",
                s.rows,
                s.groups.len(),
                s.files,
                out.display()
            );
        }
        Command::Train(args) => {
            let config = args.config()?;
            let options = TrainOptions {
                threads: cli.threads,
                exec: if args.serial { ExecMode::Serial } else { ExecMode::Parallel },
            };
            let summary = experiment::run_train(&config, options)?;
            print!("{}", experiment::summarize(&summary.reports));
            for r in &summary.reports {
                for w in &r.warnings {
                    eprintln!("warning: experiment {}: {w}", r.experiment);
                }
            }
            println!("wrote {} file(s) to {}", summary.files.len(), config.output_dir.display());
        }
        Command::Report { dir, json } => {
            let files = experiment::load_reports(&dir)?;
            let reports: Vec<_> = files.into_iter().map(|f| f.report).collect();
            if json {
                let rows = experiment::summary_rows(&reports);
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                print!("{}", experiment::summarize(&reports));
            }
        }
        Command::Synth { out, rows, separation, telnet_fraction, seed } => {
            let ds = blobs(&BlobConfig { rows, separation, telnet_fraction, seed, ..Default::default() })?;
            ds.write_csv(&out)?;
            println!("wrote {} rows to {}", ds.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::kind) {
        Some(ErrorKind::Usage) => 1,
        Some(ErrorKind::Numeric) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
