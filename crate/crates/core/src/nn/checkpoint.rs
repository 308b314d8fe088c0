//! JSON checkpoint documents for model parameters.
//!
//! ```json
//! {
//!   "format": "fedids-model",
//!   "version": 1,
//!   "layers": [
//!     { "input_dim": 6, "output_dim": 6, "activation": "relu", "dropout_after": 0.4,
//!       "weights": [[...6 values...], ...6 rows...], "biases": [...6 values...] },
//!     ...
//!   ],
//!   "scaler": { "min": [...], "max": [...] },   // optional
//!   "config_hash": "…",                          // optional
//!   "iteration": 3                               // optional
//! }
//! ```
//!
//! Layers appear in forward order; `weights` is `output_dim` rows of
//! `input_dim` values. Floats are written in shortest round-trip form, so a
//! reload is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseParams, LayerSpec, Matrix, ModelParams};
use crate::preprocess::ScalerParams;

pub const FORMAT_NAME: &str = "fedids-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerDoc {
    input_dim: usize,
    output_dim: usize,
    activation: Activation,
    dropout_after: f64,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    layers: Vec<LayerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<ScalerParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            layers: params
                .layers
                .iter()
                .map(|l| LayerDoc {
                    input_dim: l.spec.input_dim,
                    output_dim: l.spec.output_dim,
                    activation: l.spec.activation,
                    dropout_after: l.spec.dropout_after,
                    weights: (0..l.weights.rows()).map(|r| l.weights.row(r).to_vec()).collect(),
                    biases: l.biases.clone(),
                })
                .collect(),
            scaler: None,
            config_hash: None,
            iteration: None,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        if self.format != FORMAT_NAME || self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint {} v{}", self.format, self.version)));
        }
        let layers = self
            .layers
            .iter()
            .map(|d| {
                Ok(DenseParams {
                    spec: LayerSpec::new(d.input_dim, d.output_dim, d.activation, d.dropout_after),
                    weights: Matrix::from_rows(&d.weights)?,
                    biases: d.biases.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams { layers };
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("checkpoint: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
