//! Experiment configuration: a flat TOML file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{AttackSpec, MatchMode};
use crate::error::{Error, Result};
use crate::federation::{FederationConfig, PretrainSource};
use crate::nn::{AdamConfig, LocalConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    #[default]
    Raw,
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub enabled: bool,
    pub client: usize,
    pub port: u16,
    pub mode: AttackMode,
    /// Scaled-mode constant and the decimals it is rounded to.
    pub value: f64,
    pub decimals: u32,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { enabled: false, client: 0, port: 23, mode: AttackMode::Raw, value: 0.000361, decimals: 6 }
    }
}

impl AttackConfig {
    pub fn spec(&self) -> Option<AttackSpec> {
        self.enabled.then_some(AttackSpec {
            target_client: self.client,
            match_port: self.port,
            mode: match self.mode {
                AttackMode::Raw => MatchMode::RawPortMatch,
                AttackMode::Scaled => MatchMode::ScaledValueMatch { value: self.value, decimals: self.decimals },
            },
        })
    }
}

/// Everything `train` needs. Defaults reproduce the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Assembled packet table, numeric feature table, or a directory of
    /// per-capture field CSVs (assembled on the fly).
    pub input: Option<PathBuf>,
    pub rows_per_group: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub n_clients: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub repetitions: usize,
    /// Server reserve as a fraction of the training rows; absent means one
    /// share of `n_clients + 1`, zero disables pretraining.
    pub server_pretrain_fraction: Option<f64>,
    /// Pretrain on the first rows of the training set instead of the tail.
    pub overlap: bool,
    /// Clients sampled per round; absent means every client, every round.
    pub clients_per_round: Option<usize>,
    /// Fit the scaler on the training split only (the default fits on all
    /// rows before splitting).
    pub scale_on_train_only: bool,
    pub output_dir: PathBuf,
    pub checkpoint: bool,
    pub attack: AttackConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            input: None,
            rows_per_group: 2_000,
            test_fraction: 0.10,
            seed: 123,
            n_clients: 4,
            batch_size: 64,
            epochs: 200,
            iterations: 50,
            learning_rate: 0.001,
            repetitions: 10,
            server_pretrain_fraction: None,
            overlap: false,
            clients_per_round: None,
            scale_on_train_only: false,
            output_dir: PathBuf::from("results"),
            checkpoint: false,
            attack: AttackConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msgs) => {
                Error::Config(msgs.into_iter().map(|m| format!("{}: {m}", path.display())).collect())
            }
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Apply `key=value` overrides (`attack.port=23` style keys). Values are
    /// parsed as TOML, falling back to a bare string; a bare `key` means
    /// `key=true`.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut doc: toml::Table = toml::from_str(&self.to_toml()).expect("round-trips");
        let mut problems = Vec::new();
        for raw in overrides {
            let raw = raw.as_ref();
            // A bare key switches a flag on.
            let (key, value) = raw.split_once('=').unwrap_or((raw, ""));
            let value = parse_value(value.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            if let Err(msg) = set_path(&mut doc, &path, value) {
                problems.push(format!("{key}: {msg}"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        *self = doc.try_into().map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
        Ok(())
    }

    /// Every problem at once, so a bad config is fixed in one pass.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            p.push(format!("test_fraction must be in (0, 1), got {}", self.test_fraction));
        }
        if self.n_clients == 0 {
            p.push("n_clients must be at least 1".into());
        }
        if self.batch_size == 0 {
            p.push("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            p.push("epochs must be at least 1".into());
        }
        if self.iterations == 0 {
            p.push("iterations must be at least 1".into());
        }
        if self.repetitions == 0 {
            p.push("repetitions must be at least 1".into());
        }
        if self.rows_per_group == 0 {
            p.push("rows_per_group must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            p.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if let Some(f) = self.server_pretrain_fraction {
            if !(0.0..1.0).contains(&f) {
                p.push(format!("server_pretrain_fraction must be in [0, 1), got {f}"));
            }
        }
        if let Some(k) = self.clients_per_round {
            if k == 0 || k > self.n_clients {
                p.push(format!("clients_per_round {k} must be in 1..={}", self.n_clients));
            }
        }
        if self.attack.enabled && self.attack.client >= self.n_clients {
            p.push(format!("attack.client {} must be below n_clients {}", self.attack.client, self.n_clients));
        }
        if self.attack.mode == AttackMode::Scaled && !self.attack.value.is_finite() {
            p.push("attack.value must be finite".into());
        }
        if self.input.is_none() {
            p.push("input is not set".into());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn federation(&self, seed: u64) -> FederationConfig {
        FederationConfig {
            n_clients: self.n_clients,
            iterations: self.iterations,
            local: LocalConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                adam: AdamConfig::with_learning_rate(self.learning_rate),
            },
            server_pretrain_fraction: self.server_pretrain_fraction,
            pretrain_source: if self.overlap { PretrainSource::Overlap } else { PretrainSource::Reserve },
            clients_per_round: self.clients_per_round,
            seed,
        }
    }

    /// SHA-256 over the canonical JSON of the fields that affect results
    /// (output location and checkpointing excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.checkpoint = false;
        let json = serde_json::to_string(&c).expect("config serializes to JSON");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn set_path(table: &mut toml::Table, path: &[&str], value: toml::Value) -> std::result::Result<(), String> {
    match path {
        [] => Err("empty key".into()),
        [last] => {
            table.insert(last.to_string(), value);
            Ok(())
        }
        [head, rest @ ..] => {
            match table.entry(head.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
                toml::Value::Table(t) => set_path(t, rest, value),
                _ => Err(format!("{head} is not a table")),
            }
        }
    }
}

fn parse_value(text: &str) -> toml::Value {
    if text.is_empty() {
        return toml::Value::Boolean(true);
    }
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}
