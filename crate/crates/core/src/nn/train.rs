use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    adam_step, compute_gradients, compute_loss, forward, AdamConfig, AdamState, ForwardMode, Matrix, ModelParams,
};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub params: ModelParams,
    /// Sample-weighted mean of the batch losses in the last epoch.
    pub final_epoch_loss: f64,
    pub adam_steps: u64,
}

/// Encode `{0,1}` labels as two-column one-hot rows.
pub fn one_hot_rows(labels: &[u8]) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), 2);
    for (r, &l) in labels.iter().enumerate() {
        m.set(r, usize::from(l.min(1)), 1.0);
    }
    m
}

/// Train a copy of `params` on `(features, labels)`.
///
/// Each epoch reshuffles the rows with `rng`, walks them in batches of
/// `batch_size` (the last batch may be short) and applies one Adam step per
/// batch. Optimizer state starts fresh on every call.
pub fn train_local(
    params: &ModelParams,
    features: &Matrix,
    labels: &[u8],
    config: &LocalConfig,
    rng: &mut RngStream,
) -> Result<LocalOutcome> {
    if features.rows() == 0 {
        return Err(Error::Input("cannot train on an empty shard".into()));
    }
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!("{} feature rows but {} labels", features.rows(), labels.len())));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Input("epochs and batch_size must be at least 1".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Input("labels must be 0 or 1".into()));
    }
    config.adam.validate()?;

    let mut params = params.clone();
    let mut state = AdamState::new(&params, config.adam);
    let mut order: Vec<usize> = (0..features.rows()).collect();
    let mut final_epoch_loss = 0.0;

    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = features.select_rows(chunk);
            let batch_labels: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let y = one_hot_rows(&batch_labels);
            let (probs, cache) = forward(&params, &x, ForwardMode::Train(rng))?;
            loss_sum += compute_loss(&probs, &y)? * chunk.len() as f64;
            let grads = compute_gradients(&params, &cache, &y)?;
            adam_step(&mut params, &grads, &mut state)?;
        }
        final_epoch_loss = loss_sum / features.rows() as f64;
    }
    Ok(LocalOutcome { params, final_epoch_loss, adam_steps: state.step_count })
}

/// Index of the largest output per row; ties go to the lower index.
pub fn argmax_rows(probs: &Matrix) -> Vec<u8> {
    (0..probs.rows())
        .map(|r| {
            let row = probs.row(r);
            let mut best = 0;
            for (j, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = j;
                }
            }
            best as u8
        })
        .collect()
}

pub fn predict_classes(params: &ModelParams, batch: &Matrix) -> Result<Vec<u8>> {
    let (probs, _) = forward(params, batch, ForwardMode::Infer)?;
    Ok(argmax_rows(&probs))
}
