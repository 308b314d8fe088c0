//! Forward pass, loss and analytic backpropagation.

use crate::error::{Error, Result};
use crate::nn::{Activation, Matrix, ModelParams};
use crate::rng::RngStream;

/// Probability clamp applied before every logarithm in the loss.
pub const PROB_EPSILON: f64 = 1e-7;

pub enum ForwardMode<'a> {
    /// Inverted dropout with masks drawn from the stream.
    Train(&'a mut RngStream),
    /// Dropout is the identity.
    Infer,
}

/// Per-layer activations recorded by [`forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Matrix,
    pre_activation: Matrix,
    activated: Matrix,
    /// Scaled keep mask (`0` or `1/keep`), present only when dropout ran.
    mask: Option<Vec<f64>>,
}

impl LayerCache {
    pub fn mask(&self) -> Option<&[f64]> {
        self.mask.as_deref()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    output: Matrix,
}

impl ForwardCache {
    pub fn layers(&self) -> &[LayerCache] {
        &self.layers
    }

    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

fn dense(input: &Matrix, weights: &Matrix, biases: &[f64]) -> Matrix {
    let (b, n_in) = input.shape();
    let n_out = weights.rows();
    let mut out = Matrix::zeros(b, n_out);
    for r in 0..b {
        let x = input.row(r);
        let o = out.row_mut(r);
        for (j, oj) in o.iter_mut().enumerate() {
            let w = weights.row(j);
            let mut acc = biases[j];
            for k in 0..n_in {
                acc += w[k] * x[k];
            }
            *oj = acc;
        }
    }
    out
}

fn softmax_rows(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Run the network on a `B x input_dim` batch.
///
/// Returns the final layer output (class probabilities when the last layer
/// is softmax) and the cache needed by [`compute_gradients`].
pub fn forward(params: &ModelParams, batch: &Matrix, mut mode: ForwardMode<'_>) -> Result<(Matrix, ForwardCache)> {
    if batch.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} columns, network expects {}",
            batch.cols(),
            params.input_dim()
        )));
    }
    if !batch.is_finite() {
        return Err(Error::Input("non-finite value in input batch".into()));
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    let mut current = batch.clone();
    for layer in &params.layers {
        let z = dense(&current, &layer.weights, &layer.biases);
        let activated = match layer.spec.activation {
            Activation::Relu => {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
                a
            }
            Activation::Softmax => softmax_rows(&z),
        };
        let mut output = activated.clone();
        let mask = match (&mut mode, layer.spec.dropout_after > 0.0) {
            (ForwardMode::Train(rng), true) => {
                let keep = 1.0 - layer.spec.dropout_after;
                let scale = 1.0 / keep;
                let mask: Vec<f64> =
                    (0..output.as_slice().len()).map(|_| if rng.uniform() < keep { scale } else { 0.0 }).collect();
                output.as_mut_slice().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                Some(mask)
            }
            _ => None,
        };
        layers.push(LayerCache { input: current, pre_activation: z, activated, mask });
        current = output;
    }
    Ok((current.clone(), ForwardCache { layers, output: current }))
}

fn check_onehot(probs: &Matrix, onehot: &Matrix) -> Result<()> {
    if probs.shape() != onehot.shape() {
        return Err(Error::Shape(format!("probabilities {:?} vs targets {:?}", probs.shape(), onehot.shape())));
    }
    if probs.rows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    for r in 0..onehot.rows() {
        let row = onehot.row(r);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::Input(format!("target row {r} is not one-hot")));
        }
    }
    Ok(())
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

/// Sum of a row excluding column `k`; equals `1 - p_k` for rows on the simplex.
fn complement(row: &[f64], k: usize) -> f64 {
    row.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, p)| *p).sum()
}

/// Element-wise binary cross-entropy averaged over outputs, then over rows.
///
/// `1 - p` is evaluated as the sum of the row's other entries, which keeps
/// the two-class case exactly equal to `-ln(p_correct)`.
pub fn compute_loss(probs: &Matrix, onehot: &Matrix) -> Result<f64> {
    check_onehot(probs, onehot)?;
    let k = probs.cols() as f64;
    let mut total = 0.0;
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let y = onehot.row(r);
        let mut row_loss = 0.0;
        for j in 0..p.len() {
            row_loss += if y[j] == 1.0 { -clamp_prob(p[j]).ln() } else { -clamp_prob(complement(p, j)).ln() };
        }
        total += row_loss / k;
    }
    Ok(total / probs.rows() as f64)
}

/// Gradient of one layer's weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// `d loss / d theta`, shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite() && l.biases.iter().all(|v| v.is_finite()))
    }
}

/// `d loss / d probs` for [`compute_loss`], zero where the clamp is active.
fn loss_output_gradient(probs: &Matrix, onehot: &Matrix) -> Matrix {
    let scale = 1.0 / (probs.rows() * probs.cols()) as f64;
    let inside = |p: f64| p > PROB_EPSILON && p < 1.0 - PROB_EPSILON;
    let mut g = Matrix::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let y = onehot.row(r);
        let gr = g.row_mut(r);
        for k in 0..p.len() {
            if y[k] == 1.0 {
                if inside(p[k]) {
                    gr[k] -= scale / p[k];
                }
            } else {
                let s = complement(p, k);
                if inside(s) {
                    for (j, gj) in gr.iter_mut().enumerate() {
                        if j != k {
                            *gj -= scale / s;
                        }
                    }
                }
            }
        }
    }
    g
}

/// Backpropagate [`compute_loss`] through the cached forward pass.
///
/// Dropout masks recorded in the cache gate the gradient of masked units.
pub fn compute_gradients(params: &ModelParams, cache: &ForwardCache, onehot: &Matrix) -> Result<Gradients> {
    if cache.layers.len() != params.layers.len()
        || cache
            .layers
            .iter()
            .zip(&params.layers)
            .any(|(c, p)| c.pre_activation.cols() != p.spec.output_dim || c.input.cols() != p.spec.input_dim)
    {
        return Err(Error::State("activation cache does not belong to these parameters".into()));
    }
    check_onehot(&cache.output, onehot)?;

    let batch = cache.output.rows();
    let mut upstream = loss_output_gradient(&cache.output, onehot);
    let mut grads: Vec<LayerGradient> = Vec::with_capacity(params.layers.len());

    for (layer, lc) in params.layers.iter().zip(&cache.layers).rev() {
        let n_out = layer.spec.output_dim;
        let n_in = layer.spec.input_dim;

        // through dropout
        if let Some(mask) = &lc.mask {
            upstream.as_mut_slice().iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        // through the activation
        let mut dz = Matrix::zeros(batch, n_out);
        match layer.spec.activation {
            Activation::Relu => {
                for ((d, g), z) in
                    dz.as_mut_slice().iter_mut().zip(upstream.as_slice()).zip(lc.pre_activation.as_slice())
                {
                    *d = if *z > 0.0 { *g } else { 0.0 };
                }
            }
            Activation::Softmax => {
                for r in 0..batch {
                    let a = lc.activated.row(r);
                    let g = upstream.row(r);
                    let dot: f64 = a.iter().zip(g).map(|(a, g)| a * g).sum();
                    for (j, d) in dz.row_mut(r).iter_mut().enumerate() {
                        *d = a[j] * (g[j] - dot);
                    }
                }
            }
        }

        let mut dw = Matrix::zeros(n_out, n_in);
        let mut db = vec![0.0; n_out];
        for r in 0..batch {
            let x = lc.input.row(r);
            let d = dz.row(r);
            for j in 0..n_out {
                db[j] += d[j];
                let w_row = dw.row_mut(j);
                for k in 0..n_in {
                    w_row[k] += d[j] * x[k];
                }
            }
        }

        let mut dx = Matrix::zeros(batch, n_in);
        for r in 0..batch {
            let d = dz.row(r);
            let out = dx.row_mut(r);
            for (j, &dj) in d.iter().enumerate().take(n_out) {
                for (o, &w) in out.iter_mut().zip(layer.weights.row(j)) {
                    *o += dj * w;
                }
            }
        }
        grads.push(LayerGradient { weights: dw, biases: db });
        upstream = dx;
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{detector_architecture, init_params};

    fn onehot(labels: &[u8]) -> Matrix {
        let rows: Vec<[f64; 2]> = labels.iter().map(|&l| if l == 0 { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn zero_network_is_uniform() {
        let p = ModelParams::zeros(&detector_architecture(6)).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [0.0; 6]]).unwrap();
        let (probs, _) = forward(&p, &x, ForwardMode::Infer).unwrap();
        for r in 0..2 {
            assert_eq!(probs.row(r), &[0.5, 0.5]);
        }
    }

    #[test]
    fn final_bias_shifts_softmax() {
        let mut p = ModelParams::zeros(&detector_architecture(6)).unwrap();
        p.layers[2].biases[0] = 3f64.ln();
        let x = Matrix::from_rows(&[[0.3; 6]]).unwrap();
        let (probs, _) = forward(&p, &x, ForwardMode::Infer).unwrap();
        assert!((probs.get(0, 0) - 0.75).abs() < 1e-15);
        assert!((probs.get(0, 1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn infer_is_repeatable_and_train_masks_are_recorded() {
        let p = init_params(&detector_architecture(6), &mut RngStream::new(3, 1)).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]; 5]).unwrap();
        let (a, ca) = forward(&p, &x, ForwardMode::Infer).unwrap();
        let (b, _) = forward(&p, &x, ForwardMode::Infer).unwrap();
        assert_eq!(a, b);
        assert!(ca.layers().iter().all(|l| l.mask().is_none()));

        let mut rng = RngStream::new(3, 2);
        let (_, ct) = forward(&p, &x, ForwardMode::Train(&mut rng)).unwrap();
        let m = ct.layers()[0].mask().unwrap();
        assert_eq!(m.len(), 5 * 6);
        assert!(m.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.6).abs() < 1e-15));
        assert!(ct.layers()[2].mask().is_none());
    }

    #[test]
    fn rejects_non_finite_and_bad_width() {
        let p = ModelParams::zeros(&detector_architecture(6)).unwrap();
        let x = Matrix::from_rows(&[[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(forward(&p, &x, ForwardMode::Infer), Err(Error::Input(_))));
        let x = Matrix::from_rows(&[[0.0; 5]]).unwrap();
        assert!(matches!(forward(&p, &x, ForwardMode::Infer), Err(Error::Shape(_))));
    }

    #[test]
    fn loss_reference_values() {
        let half = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let l = compute_loss(&half, &onehot(&[0])).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);

        let sure = Matrix::from_rows(&[[1.0 - 1e-7, 1e-7]]).unwrap();
        let l = compute_loss(&sure, &onehot(&[0])).unwrap();
        assert!((l - 1e-7).abs() < 1e-12, "{l}");

        let p = Matrix::from_rows(&[[0.9, 0.1]]).unwrap();
        let l = compute_loss(&p, &onehot(&[0])).unwrap();
        assert!((l - 0.105_360_515_657_826_3).abs() < 1e-12, "{l}");

        // saturated probabilities stay finite
        let p = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let l = compute_loss(&p, &onehot(&[1])).unwrap();
        assert!((l - -(1e-7f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn loss_shape_and_target_errors() {
        let p = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!(matches!(compute_loss(&p, &onehot(&[0, 1])), Err(Error::Shape(_))));
        let bad = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!(matches!(compute_loss(&p, &bad), Err(Error::Input(_))));
    }

    #[test]
    fn symmetric_batch_cancels_final_bias_gradient() {
        let p = ModelParams::zeros(&detector_architecture(6)).unwrap();
        let x = Matrix::from_rows(&[[0.2; 6], [0.7; 6], [0.1; 6], [0.9; 6]]).unwrap();
        let (_, cache) = forward(&p, &x, ForwardMode::Infer).unwrap();
        let g = compute_gradients(&p, &cache, &onehot(&[0, 1, 1, 0])).unwrap();
        assert_eq!(g.layers[2].biases, vec![0.0, 0.0]);
    }

    #[test]
    fn duplicated_rows_leave_gradient_unchanged() {
        let p = init_params(&detector_architecture(6), &mut RngStream::new(11, 1)).unwrap();
        let rows = [[0.2, 0.4, 0.1, 0.9, 0.3, 0.5], [0.8, 0.1, 0.6, 0.2, 0.7, 0.4]];
        let x = Matrix::from_rows(&rows).unwrap();
        let x2 = Matrix::from_rows(&[rows[0], rows[0], rows[1], rows[1]]).unwrap();
        let (_, c1) = forward(&p, &x, ForwardMode::Infer).unwrap();
        let (_, c2) = forward(&p, &x2, ForwardMode::Infer).unwrap();
        let g1 = compute_gradients(&p, &c1, &onehot(&[0, 1])).unwrap().flatten();
        let g2 = compute_gradients(&p, &c2, &onehot(&[0, 0, 1, 1])).unwrap().flatten();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn masked_units_get_no_gradient() {
        let p = init_params(&detector_architecture(6), &mut RngStream::new(2, 1)).unwrap();
        let x = Matrix::from_rows(&[[0.5, 0.4, 0.3, 0.2, 0.1, 0.9]]).unwrap();
        let mut rng = RngStream::new(2, 9);
        // find a draw that drops at least one first-layer unit
        loop {
            let (_, cache) = forward(&p, &x, ForwardMode::Train(&mut rng)).unwrap();
            let mask = cache.layers()[0].mask().unwrap().to_vec();
            if let Some(j) = mask.iter().position(|&m| m == 0.0) {
                let g = compute_gradients(&p, &cache, &onehot(&[1])).unwrap();
                assert!(g.layers[0].weights.row(j).iter().all(|&v| v == 0.0));
                assert_eq!(g.layers[0].biases[j], 0.0);
                break;
            }
        }
    }

    #[test]
    fn foreign_cache_is_rejected() {
        let p = ModelParams::zeros(&detector_architecture(6)).unwrap();
        let other = ModelParams::zeros(&detector_architecture(3)).unwrap();
        let x = Matrix::from_rows(&[[0.0; 3]]).unwrap();
        let (_, cache) = forward(&other, &x, ForwardMode::Infer).unwrap();
        assert!(matches!(compute_gradients(&p, &cache, &onehot(&[0])), Err(Error::State(_))));
    }
}
