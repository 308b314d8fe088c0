//! Cross-device federated simulation: contiguous client shards, server
//! pretraining on the reserved tail, per-round local training and unweighted
//! parameter averaging.

use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attack::{apply_label_flip, AttackSpec, FlipOutcome};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::metrics::{evaluate, IterationMetrics, MetricsReport, TestMetrics};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{detector_architecture, init_params, train_local, LocalConfig, ModelParams};
use crate::preprocess::ScalerParams;
use crate::rng::{streams, RngStream};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientPartition {
    pub client_id: usize,
    pub rows: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioning {
    pub clients: Vec<ClientPartition>,
    /// Tail left for server pretraining.
    pub reserve: Range<usize>,
}

/// `n_clients` equal shards of `floor(train_size / (n_clients + 1))` rows;
/// the remainder (about one share) is reserved for the server.
pub fn partition(train_size: usize, n_clients: usize) -> Result<Partitioning> {
    if n_clients == 0 {
        return Err(Error::Input("need at least one client".into()));
    }
    if train_size < n_clients + 1 {
        return Err(Error::Input(format!(
            "{train_size} training rows cannot feed {n_clients} clients plus the server"
        )));
    }
    Ok(contiguous(train_size, n_clients, train_size / (n_clients + 1)))
}

/// Like [`partition`], but reserving `reserve_fraction` of the rows for the
/// server: shard size is `floor(train_size * (1 - fraction) / n_clients)`.
pub fn partition_with_reserve(train_size: usize, n_clients: usize, reserve_fraction: f64) -> Result<Partitioning> {
    if n_clients == 0 {
        return Err(Error::Input("need at least one client".into()));
    }
    if !(0.0..1.0).contains(&reserve_fraction) {
        return Err(Error::Input(format!("reserve fraction {reserve_fraction} outside [0, 1)")));
    }
    let shard = ((train_size as f64 * (1.0 - reserve_fraction)) / n_clients as f64).floor() as usize;
    if shard == 0 {
        return Err(Error::Input(format!("{train_size} training rows leave empty shards for {n_clients} clients")));
    }
    Ok(contiguous(train_size, n_clients, shard))
}

fn contiguous(train_size: usize, n_clients: usize, shard: usize) -> Partitioning {
    let clients = (0..n_clients).map(|i| ClientPartition { client_id: i, rows: i * shard..(i + 1) * shard }).collect();
    Partitioning { clients, reserve: n_clients * shard..train_size }
}

/// Where the server's pretraining rows come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainSource {
    /// The tail left after the client shards (disjoint from every client).
    #[default]
    Reserve,
    /// The first rows of the training set, as many as the reserve holds
    /// (overlaps client 0).
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub n_clients: usize,
    pub iterations: usize,
    pub local: LocalConfig,
    /// `None` reserves `1 / (n_clients + 1)`; `Some(0.0)` skips pretraining.
    pub server_pretrain_fraction: Option<f64>,
    pub pretrain_source: PretrainSource,
    /// Clients drawn per round; `None` means all of them take part.
    #[serde(default)]
    pub clients_per_round: Option<usize>,
    pub seed: u64,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_clients == 0 {
            problems.push("n_clients must be at least 1".to_string());
        }
        if self.iterations == 0 {
            problems.push("iterations must be at least 1".to_string());
        }
        if self.local.epochs == 0 {
            problems.push("epochs must be at least 1".to_string());
        }
        if self.local.batch_size == 0 {
            problems.push("batch_size must be at least 1".to_string());
        }
        if self.local.adam.validate().is_err() {
            problems.push(format!("invalid learning rate {}", self.local.adam.learning_rate));
        }
        if let Some(f) = self.server_pretrain_fraction {
            if !(0.0..1.0).contains(&f) {
                problems.push(format!("server_pretrain_fraction {f} outside [0, 1)"));
            }
        }
        if let Some(k) = self.clients_per_round {
            if k == 0 || k > self.n_clients {
                problems.push(format!("clients_per_round {k} must be in 1..={}", self.n_clients));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Clients taking part in round `iteration`, in ascending order.
    pub fn participants(&self, iteration: usize) -> Vec<usize> {
        match self.clients_per_round {
            Some(k) if k < self.n_clients => {
                let mut rng = RngStream::new(self.seed, streams::sampling(iteration));
                let mut ids = rand::seq::index::sample(&mut rng, self.n_clients, k).into_vec();
                ids.sort_unstable();
                ids
            }
            _ => (0..self.n_clients).collect(),
        }
    }

    pub fn partition(&self, train_size: usize) -> Result<Partitioning> {
        match self.server_pretrain_fraction {
            None => partition(train_size, self.n_clients),
            Some(f) => partition_with_reserve(train_size, self.n_clients, f),
        }
    }

    fn pretrains(&self) -> bool {
        self.server_pretrain_fraction != Some(0.0)
    }
}

/// Fresh Glorot init followed by one local-training pass over `rows`.
pub fn pretrain_server(
    train: &Dataset,
    rows: Range<usize>,
    local: &LocalConfig,
    seed: u64,
) -> Result<(ModelParams, f64)> {
    if rows.is_empty() {
        return Err(Error::Input("server pretraining set is empty".into()));
    }
    let init = init_params(&detector_architecture(train.features.cols()), &mut RngStream::new(seed, streams::INIT))?;
    let shard = train.slice(rows);
    let out = train_local(&init, &shard.features, &shard.labels, local, &mut RngStream::new(seed, streams::SERVER))?;
    Ok((out.params, out.final_epoch_loss))
}

/// Unweighted element-wise mean, accumulated in client order.
pub fn aggregate(models: &[ModelParams]) -> Result<ModelParams> {
    let first = models.first().ok_or_else(|| Error::Aggregation("no client models to aggregate".into()))?;
    if let Some(i) = models.iter().position(|m| !m.same_shape(first)) {
        return Err(Error::Aggregation(format!("client {i} returned mis-shaped parameters")));
    }
    let mut acc = first.flatten();
    for m in &models[1..] {
        for (a, v) in acc.iter_mut().zip(m.flatten()) {
            *a += v;
        }
    }
    let n = models.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    let mut out = first.clone();
    out.assign_flat(&acc)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RoundTrace {
    pub iteration: usize,
    pub client_losses: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
    pub metrics: IterationMetrics,
}

/// One round: every client trains a copy of `global` on its shard with a
/// fresh optimizer, then the server averages the results. Training-set
/// metrics of the averaged model go into the trace.
pub fn run_round(
    global: &ModelParams,
    partitions: &[ClientPartition],
    train: &Dataset,
    local: &LocalConfig,
    rngs: Vec<RngStream>,
    exec: ExecMode,
    iteration: usize,
) -> Result<(ModelParams, RoundTrace)> {
    if partitions.is_empty() {
        return Err(Error::Input("round needs at least one client".into()));
    }
    if rngs.len() != partitions.len() {
        return Err(Error::Input(format!("{} random streams for {} clients", rngs.len(), partitions.len())));
    }
    let rngs: Vec<std::sync::Mutex<RngStream>> = rngs.into_iter().map(std::sync::Mutex::new).collect();
    let results = map_indexed(exec, partitions.len(), |i| {
        let shard = train.slice(partitions[i].rows.clone());
        let mut rng = rngs[i].lock().expect("client stream lock");
        train_local(global, &shard.features, &shard.labels, local, &mut rng)
    });
    let mut models = Vec::with_capacity(results.len());
    let mut client_losses = Vec::with_capacity(results.len());
    for r in results {
        let out = r?;
        client_losses.push(out.final_epoch_loss);
        models.push(out.params);
    }
    let aggregated = aggregate(&models)?;
    let eval = evaluate(&aggregated, &train.features, &train.labels, exec)?;
    let metrics = IterationMetrics {
        experiment: 0,
        iteration,
        accuracy: eval.accuracy,
        precision: eval.scores.precision,
        recall: eval.scores.recall,
        f1: eval.scores.f1,
        loss: eval.loss,
        client_losses: client_losses.clone(),
        undefined: eval.scores.undefined,
    };
    Ok((aggregated, RoundTrace { iteration, client_losses, checkpoint: None, metrics }))
}

/// Per-run settings that do not affect the numbers produced.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub exec: ExecMode,
    pub experiment_id: usize,
    pub config_hash: String,
    /// Write the aggregated model after every round into this directory.
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub params: ModelParams,
    pub traces: Vec<RoundTrace>,
}

/// Full federated experiment: optional poisoning of the target client's
/// shard, server pretraining, `iterations` rounds, final test evaluation.
pub fn run_experiment(
    train: &Dataset,
    test: &Dataset,
    config: &FederationConfig,
    attack: Option<&AttackSpec>,
    scaler: Option<&ScalerParams>,
    options: &RunOptions,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    if test.is_empty() {
        return Err(Error::Input("test set is empty".into()));
    }
    let parts = config.partition(train.len())?;
    let mut train = train.clone();

    let flip: Option<FlipOutcome> = match attack {
        Some(spec) => {
            let target = parts.clients.get(spec.target_client).ok_or_else(|| {
                Error::Config(vec![format!(
                    "attack targets client {} but only {} clients exist",
                    spec.target_client, config.n_clients
                )])
            })?;
            Some(apply_label_flip(&mut train, target.rows.clone(), spec, scaler)?)
        }
        None => None,
    };

    let mut warnings = Vec::new();
    let (mut global, pretrain_loss) = if config.pretrains() {
        let rows = match config.pretrain_source {
            PretrainSource::Reserve => parts.reserve.clone(),
            PretrainSource::Overlap => 0..parts.reserve.len(),
        };
        let (p, loss) = pretrain_server(&train, rows, &config.local, config.seed)?;
        (p, Some(loss))
    } else {
        let init = init_params(
            &detector_architecture(train.features.cols()),
            &mut RngStream::new(config.seed, streams::INIT),
        )?;
        (init, None)
    };

    if let Some(dir) = &options.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut traces = Vec::with_capacity(config.iterations);
    for iteration in 1..=config.iterations {
        let active: Vec<ClientPartition> =
            config.participants(iteration).into_iter().map(|i| parts.clients[i].clone()).collect();
        let rngs =
            active.iter().map(|c| RngStream::new(config.seed, streams::client(c.client_id, iteration))).collect();
        let (next, mut trace) = run_round(&global, &active, &train, &config.local, rngs, options.exec, iteration)?;
        trace.metrics.experiment = options.experiment_id;
        if trace.metrics.undefined && !warnings.iter().any(|w: &String| w.starts_with("undefined")) {
            warnings
                .push(format!("undefined per-class precision/recall counted as 0 (first at iteration {iteration})"));
        }
        if let Some(dir) = &options.checkpoint_dir {
            let path = dir.join(format!("exp{:02}_iter{:03}.json", options.experiment_id, iteration));
            let mut ck = Checkpoint::new(&next);
            ck.scaler = scaler.cloned();
            ck.config_hash = Some(options.config_hash.clone());
            ck.iteration = Some(iteration);
            ck.save(&path)?;
            trace.checkpoint = Some(path);
        }
        global = next;
        traces.push(trace);
    }

    let eval = evaluate(&global, &test.features, &test.labels, options.exec)?;
    if eval.scores.undefined {
        warnings.push("undefined per-class precision/recall on the test set counted as 0".into());
    }
    let report = MetricsReport {
        experiment: options.experiment_id,
        seed: config.seed,
        config_hash: options.config_hash.clone(),
        pretrain_loss,
        iterations: traces.iter().map(|t| t.metrics.clone()).collect(),
        test: TestMetrics::from(&eval),
        attack: flip,
        warnings,
    };
    Ok(ExperimentOutcome { report, params: global, traces })
}
