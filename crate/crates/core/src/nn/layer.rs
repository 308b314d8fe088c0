use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
}

/// One dense layer: `output = activation(W x + b)`, followed by optional
/// dropout with drop probability `dropout_after`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub dropout_after: f64,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation, dropout_after: f64) -> Self {
        Self { input_dim, output_dim, activation, dropout_after }
    }
}

/// The 6 -> 6 -> 4 -> 2 classifier: ReLU hidden layers each followed by
/// dropout 0.4, softmax output.
pub fn detector_architecture(input_dim: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(input_dim, 6, Activation::Relu, 0.4),
        LayerSpec::new(6, 4, Activation::Relu, 0.4),
        LayerSpec::new(4, 2, Activation::Softmax, 0.0),
    ]
}

/// Check a layer list: non-empty, positive dims, chained dims, softmax last,
/// dropout in `[0, 1)`.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Shape("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(Error::Shape(format!("layer {i} has a zero dimension")));
        }
        if !(0.0..1.0).contains(&s.dropout_after) {
            return Err(Error::Shape(format!("layer {i} dropout {} outside [0, 1)", s.dropout_after)));
        }
        if s.activation == Activation::Softmax && i + 1 != specs.len() {
            return Err(Error::Shape(format!("softmax on hidden layer {i}")));
        }
        if let Some(next) = specs.get(i + 1) {
            if next.input_dim != s.output_dim {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    s.output_dim,
                    i + 1,
                    next.input_dim
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub spec: LayerSpec,
    /// `output_dim x input_dim`
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// Weights and biases of every layer; what clients and the server exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<DenseParams>,
}

impl ModelParams {
    /// All-zero parameters for the given architecture.
    pub fn zeros(specs: &[LayerSpec]) -> Result<Self> {
        validate_specs(specs)?;
        Ok(Self {
            layers: specs
                .iter()
                .map(|s| DenseParams {
                    spec: *s,
                    weights: Matrix::zeros(s.output_dim, s.input_dim),
                    biases: vec![0.0; s.output_dim],
                })
                .collect(),
        })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output_dim
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.biases.len()).sum()
    }

    /// Every parameter, layer by layer, weights (row-major) before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.num_parameters(), values.len())));
        }
        let mut pos = 0;
        for l in &mut self.layers {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&values[pos..pos + w.len()]);
            pos += w.len();
            let n = l.biases.len();
            l.biases.copy_from_slice(&values[pos..pos + n]);
            pos += n;
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.shape() == b.weights.shape() && a.biases.len() == b.biases.len())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite() && l.biases.iter().all(|b| b.is_finite()))
    }

    /// Structural validation for deserialized parameters.
    pub fn validate(&self) -> Result<()> {
        validate_specs(&self.specs())?;
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.shape() != (l.spec.output_dim, l.spec.input_dim) || l.biases.len() != l.spec.output_dim {
                return Err(Error::Shape(format!("layer {i} tensors do not match its spec")));
            }
        }
        if !self.is_finite() {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_params(specs: &[LayerSpec], rng: &mut RngStream) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(specs)?;
    for layer in &mut params.layers {
        let limit = (6.0 / (layer.spec.input_dim + layer.spec.output_dim) as f64).sqrt();
        for w in layer.weights.as_mut_slice() {
            *w = (2.0 * rng.uniform() - 1.0) * limit;
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_shapes_and_zero_biases() {
        let mut rng = RngStream::new(9, 1);
        let p = init_params(&detector_architecture(6), &mut rng).unwrap();
        let shapes: Vec<_> = p.layers.iter().map(|l| l.weights.shape()).collect();
        assert_eq!(shapes, vec![(6, 6), (4, 6), (2, 4)]);
        let bias_lens: Vec<_> = p.layers.iter().map(|l| l.biases.len()).collect();
        assert_eq!(bias_lens, vec![6, 4, 2]);
        assert!(p.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        assert_eq!(p.num_parameters(), 42 + 28 + 10);
    }

    #[test]
    fn unit_layer_bound() {
        let spec = [LayerSpec::new(1, 1, Activation::Softmax, 0.0)];
        let bound = 3f64.sqrt();
        for seed in 0..500 {
            let p = init_params(&spec, &mut RngStream::new(seed, 1)).unwrap();
            let w = p.layers[0].weights.get(0, 0);
            assert!((-bound..=bound).contains(&w), "{w}");
        }
    }

    #[test]
    fn init_is_deterministic() {
        let specs = detector_architecture(6);
        let a = init_params(&specs, &mut RngStream::new(5, 3)).unwrap();
        let b = init_params(&specs, &mut RngStream::new(5, 3)).unwrap();
        assert_eq!(a, b);
        let c = init_params(&specs, &mut RngStream::new(5, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chain_mismatch_is_rejected() {
        let specs = [LayerSpec::new(6, 6, Activation::Relu, 0.4), LayerSpec::new(5, 2, Activation::Softmax, 0.0)];
        assert!(matches!(init_params(&specs, &mut RngStream::new(0, 0)), Err(Error::Shape(_))));
        assert!(matches!(validate_specs(&[]), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_only_last() {
        let specs = [LayerSpec::new(6, 6, Activation::Softmax, 0.0), LayerSpec::new(6, 2, Activation::Softmax, 0.0)];
        assert!(validate_specs(&specs).is_err());
    }

    #[test]
    fn flatten_roundtrip() {
        let specs = detector_architecture(6);
        let a = init_params(&specs, &mut RngStream::new(1, 1)).unwrap();
        let mut b = ModelParams::zeros(&specs).unwrap();
        b.assign_flat(&a.flatten()).unwrap();
        assert_eq!(a, b);
    }
}
