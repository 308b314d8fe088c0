//! Synthetic two-class Gaussian blobs shaped like the packet predictor table.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, PREDICTORS};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{streams, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub rows: usize,
    /// Distance between the class centres along every axis, in standard
    /// deviations. Centres sit at `-separation/2` (benign) and
    /// `+separation/2` (malicious).
    pub separation: f64,
    pub sigma: f64,
    /// Fraction of malicious rows whose `tcp_srcport` is replaced by 23.
    pub telnet_fraction: f64,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self { rows: 2_000, separation: 4.0, sigma: 1.0, telnet_fraction: 0.0, seed: 0 }
    }
}

/// Rows alternate benign/malicious so any contiguous shard is balanced.
pub fn blobs(config: &BlobConfig) -> Result<Dataset> {
    if config.rows == 0 {
        return Err(Error::Input("blob dataset needs at least one row".into()));
    }
    if !(config.sigma > 0.0 && config.sigma.is_finite()) {
        return Err(Error::Input(format!("sigma must be positive, got {}", config.sigma)));
    }
    if !(0.0..=1.0).contains(&config.telnet_fraction) {
        return Err(Error::Input(format!("telnet_fraction {} outside [0, 1]", config.telnet_fraction)));
    }
    let cols = PREDICTORS.len();
    let port = PREDICTORS.iter().position(|&c| c == "tcp_srcport").expect("port predictor");
    let noise = Normal::new(0.0, config.sigma).map_err(|e| Error::Input(e.to_string()))?;
    let mut rng = RngStream::new(config.seed, streams::SYNTH);
    let half = config.separation * config.sigma / 2.0;

    let mut data = Vec::with_capacity(config.rows * cols);
    let mut labels = Vec::with_capacity(config.rows);
    for i in 0..config.rows {
        let label = (i % 2) as u8;
        let centre = if label == 1 { half } else { -half };
        for _ in 0..cols {
            data.push(centre + noise.sample(&mut rng));
        }
        if label == 1 && config.telnet_fraction > 0.0 && rng.uniform() < config.telnet_fraction {
            data[i * cols + port] = 23.0;
        }
        labels.push(label);
    }
    Dataset::new(PREDICTORS.iter().map(|s| s.to_string()).collect(), Matrix::from_vec(config.rows, cols, data)?, labels)
}
