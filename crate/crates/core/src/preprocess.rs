//! Min-max scaling, seeded train/test split and one-hot labels.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{one_hot_rows, Matrix};
use crate::rng::{streams, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    pub fn num_features(&self) -> usize {
        self.min.len()
    }

    /// Map one raw value of column `col` into scaled space.
    pub fn scale_value(&self, col: usize, x: f64) -> f64 {
        let span = self.max[col] - self.min[col];
        if span > 0.0 {
            (x - self.min[col]) / span
        } else {
            0.0
        }
    }

    /// Map a scaled value of column `col` back to raw units.
    pub fn unscale_value(&self, col: usize, x: f64) -> f64 {
        x * (self.max[col] - self.min[col]) + self.min[col]
    }
}

/// Per-column minimum and maximum.
pub fn fit_scaler(features: &Matrix) -> Result<ScalerParams> {
    if features.rows() == 0 {
        return Err(Error::Input("cannot fit a scaler on zero rows".into()));
    }
    if !features.is_finite() {
        return Err(Error::Input("non-finite value in scaler input".into()));
    }
    let mut min = features.row(0).to_vec();
    let mut max = min.clone();
    for r in 1..features.rows() {
        for (c, &v) in features.row(r).iter().enumerate() {
            min[c] = min[c].min(v);
            max[c] = max[c].max(v);
        }
    }
    Ok(ScalerParams { min, max })
}

/// `(x - min) / (max - min)` per column; constant columns map to 0.
pub fn transform(scaler: &ScalerParams, features: &Matrix) -> Result<Matrix> {
    if features.cols() != scaler.num_features() {
        return Err(Error::Shape(format!(
            "scaler fitted on {} columns, input has {}",
            scaler.num_features(),
            features.cols()
        )));
    }
    let mut out = features.clone();
    for r in 0..out.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = scaler.scale_value(c, *v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Dataset,
    pub test: Dataset,
    /// Input row index for each position of `train` followed by `test`.
    pub permutation: Vec<usize>,
}

/// Number of test rows: `ceil(fraction * n)`, treating products within 1e-9
/// of an integer as that integer.
pub fn test_size(n: usize, fraction: f64) -> usize {
    let exact = fraction * n as f64;
    let nearest = exact.round();
    if (exact - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        exact.ceil() as usize
    }
}

/// Shuffle rows with a permutation seeded by `seed`; the last
/// `ceil(fraction * n)` rows become the test set.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitResult> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Input(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Input(format!("cannot split {n} rows")));
    }
    let n_test = test_size(n, test_fraction).clamp(1, n - 1);
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut RngStream::new(seed, streams::SPLIT));
    let cut = n - n_test;
    Ok(SplitResult {
        train: dataset.select_rows(&permutation[..cut]),
        test: dataset.select_rows(&permutation[cut..]),
        permutation,
    })
}

/// Label 0 -> `(1, 0)`, label 1 -> `(0, 1)`.
pub fn one_hot(labels: &[u8]) -> Result<Matrix> {
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Input(format!("label {bad} is not 0 or 1")));
    }
    Ok(one_hot_rows(labels))
}
