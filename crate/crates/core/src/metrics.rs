//! Confusion counts, support-weighted scores and model evaluation.

use serde::{Deserialize, Serialize};

use crate::attack::FlipOutcome;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::nn::{argmax_rows, compute_loss, forward, one_hot_rows, ForwardMode, Matrix, ModelParams};
use crate::preprocess::{transform, ScalerParams};

/// Rows per evaluation chunk. Fixed so the loss reduction order (and hence
/// its bits) does not depend on the thread count.
const EVAL_CHUNK: usize = 2048;

/// Binary confusion counts with label 1 (malware) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// `(true positives, false positives, support)` treating `class` as positive.
    fn class_counts(&self, class: u8) -> (u64, u64, u64) {
        if class == 1 {
            (self.tp, self.fp, self.tp + self.fn_)
        } else {
            (self.tn, self.fn_, self.tn + self.fp)
        }
    }
}

pub fn confusion(predicted: &[u8], truth: &[u8]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::Input(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (1, 1) => m.tp += 1,
            (0, 0) => m.tn += 1,
            (1, 0) => m.fp += 1,
            (0, 1) => m.fn_ += 1,
            _ => return Err(Error::Input(format!("labels must be 0 or 1, got ({p}, {t})"))),
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some per-class precision or recall had a zero denominator and was
    /// counted as 0.
    pub undefined: bool,
}

/// Precision, recall and F1 for one class.
pub fn class_scores(m: &ConfusionMatrix, class: u8) -> (ClassScores, bool) {
    let (tp, fp, support) = m.class_counts(class);
    let predicted = tp + fp;
    let mut undefined = false;
    let precision = if predicted > 0 {
        tp as f64 / predicted as f64
    } else {
        undefined = true;
        0.0
    };
    let recall = if support > 0 {
        tp as f64 / support as f64
    } else {
        undefined = true;
        0.0
    };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    (ClassScores { precision, recall, f1, support }, undefined)
}

/// Accuracy plus support-weighted precision, recall and F1 over both classes.
///
/// Weighted terms are formed as `support * tp / denominator` from integer
/// counts, so weighted recall reproduces accuracy bit for bit.
pub fn scores(m: &ConfusionMatrix) -> Result<Scores> {
    let n = m.total();
    if n == 0 {
        return Err(Error::Input("no rows to score".into()));
    }
    let nf = n as f64;
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut f1 = 0.0;
    let mut undefined = false;
    for class in [0u8, 1] {
        let (tp, fp, support) = m.class_counts(class);
        let (cs, u) = class_scores(m, class);
        undefined |= u && support > 0;
        if tp + fp > 0 {
            precision += (support * tp) as f64 / (tp + fp) as f64;
        }
        if support > 0 {
            recall += (support * tp) as f64 / support as f64;
        }
        f1 += support as f64 * cs.f1;
    }
    Ok(Scores {
        accuracy: (m.tp + m.tn) as f64 / nf,
        precision: precision / nf,
        recall: recall / nf,
        f1: f1 / nf,
        undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub scores: Scores,
    pub confusion: ConfusionMatrix,
}

/// Inference-mode metrics on already-scaled features.
pub fn evaluate(params: &ModelParams, features: &Matrix, labels: &[u8], exec: ExecMode) -> Result<Evaluation> {
    if features.rows() == 0 {
        return Err(Error::Input("cannot evaluate on zero rows".into()));
    }
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", features.rows(), labels.len())));
    }
    let n = features.rows();
    let chunks = n.div_ceil(EVAL_CHUNK);
    let parts = map_indexed(exec, chunks, |c| -> Result<(Vec<u8>, f64)> {
        let start = c * EVAL_CHUNK;
        let end = (start + EVAL_CHUNK).min(n);
        let x = features.slice_rows(start, end);
        let (probs, _) = forward(params, &x, ForwardMode::Infer)?;
        let loss = compute_loss(&probs, &one_hot_rows(&labels[start..end]))?;
        Ok((argmax_rows(&probs), loss * (end - start) as f64))
    });
    let mut predicted = Vec::with_capacity(n);
    let mut loss_sum = 0.0;
    for part in parts {
        let (p, l) = part?;
        predicted.extend(p);
        loss_sum += l;
    }
    let confusion = confusion(&predicted, labels)?;
    let scores = scores(&confusion)?;
    Ok(Evaluation { accuracy: scores.accuracy, loss: loss_sum / n as f64, scores, confusion })
}

/// Scale raw features with the training-time scaler, then [`evaluate`].
pub fn evaluate_raw(
    params: &ModelParams,
    scaler: &ScalerParams,
    raw: &Matrix,
    labels: &[u8],
    exec: ExecMode,
) -> Result<Evaluation> {
    evaluate(params, &transform(scaler, raw)?, labels, exec)
}

/// Training-set scores of the aggregated model after one federated round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub experiment: usize,
    pub iteration: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub loss: f64,
    pub client_losses: Vec<f64>,
    pub undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub accuracy: f64,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: bool,
}

impl From<&Evaluation> for TestMetrics {
    fn from(e: &Evaluation) -> Self {
        Self {
            accuracy: e.accuracy,
            loss: e.loss,
            precision: e.scores.precision,
            recall: e.scores.recall,
            f1: e.scores.f1,
            undefined: e.scores.undefined,
        }
    }
}

/// Everything measured during one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: usize,
    pub seed: u64,
    pub config_hash: String,
    pub pretrain_loss: Option<f64>,
    pub iterations: Vec<IterationMetrics>,
    pub test: TestMetrics,
    pub attack: Option<FlipOutcome>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn final_iteration(&self) -> Option<&IterationMetrics> {
        self.iterations.last()
    }
}

/// Columns of the per-iteration CSV.
pub const ITERATION_CSV_HEADER: [&str; 6] = ["experiment", "iteration", "accuracy", "precision", "recall", "f1"];

/// Append the per-iteration rows of `reports` to a CSV writer (header first).
pub fn write_iteration_csv<W: std::io::Write>(reports: &[MetricsReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ITERATION_CSV_HEADER)?;
    for r in reports {
        for it in &r.iterations {
            w.write_record([
                it.experiment.to_string(),
                it.iteration.to_string(),
                it.accuracy.to_string(),
                it.precision.to_string(),
                it.recall.to_string(),
                it.f1.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{detector_architecture, Activation, LayerSpec};
    use proptest::prelude::*;

    #[test]
    fn confusion_examples() {
        let m = confusion(&[1, 1, 0, 0], &[1, 0, 0, 1]).unwrap();
        assert_eq!(m, ConfusionMatrix { tp: 1, tn: 1, fp: 1, fn_: 1 });
        let m = confusion(&[0, 1, 1], &[0, 1, 1]).unwrap();
        assert_eq!((m.fp, m.fn_), (0, 0));
        let m = confusion(&[0; 5], &[1; 5]).unwrap();
        assert_eq!(m, ConfusionMatrix { tp: 0, tn: 0, fp: 0, fn_: 5 });
        assert!(confusion(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn perfect_scores() {
        let s = scores(&confusion(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap()).unwrap();
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(!s.undefined);
    }

    #[test]
    fn weighted_precision_by_hand() {
        let s = scores(&confusion(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap()).unwrap();
        assert!((s.precision - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(s.recall, 0.75);
        assert_eq!(s.accuracy, 0.75);
        // f1: class 0 = 0.8, class 1 = 2/3
        assert!((s.f1 - (2.0 * 0.8 + 2.0 * (2.0 / 3.0)) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn undefined_precision_counts_as_zero() {
        let s = scores(&confusion(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap()).unwrap();
        assert!(s.undefined);
        assert_eq!(s.accuracy, 0.5);
        assert_eq!(s.precision, 0.25);
        assert!(scores(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn zero_model_on_balanced_set() {
        let p = ModelParams::zeros(&detector_architecture(6)).unwrap();
        let x = Matrix::from_rows(&[[0.1; 6], [0.2; 6], [0.3; 6], [0.4; 6]]).unwrap();
        let e = evaluate(&p, &x, &[0, 1, 0, 1], ExecMode::Serial).unwrap();
        assert_eq!(e.accuracy, 0.5);
        assert!((e.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_row() {
        let mut p = ModelParams::zeros(&[LayerSpec::new(1, 2, Activation::Softmax, 0.0)]).unwrap();
        p.layers[0].biases = vec![0.0, 40.0];
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        let e = evaluate(&p, &x, &[1], ExecMode::Serial).unwrap();
        assert_eq!(e.accuracy, 1.0);
        assert!((e.loss - 1e-7).abs() < 1e-12, "{}", e.loss);
    }

    #[test]
    fn chunked_parallel_matches_serial() {
        let p = crate::nn::init_params(&detector_architecture(6), &mut crate::rng::RngStream::new(1, 1)).unwrap();
        let rows: Vec<[f64; 6]> =
            (0..5000).map(|i| [(i % 17) as f64 / 17.0, 0.3, (i % 5) as f64 / 5.0, 0.1, 0.9, (i % 3) as f64]).collect();
        let labels: Vec<u8> = (0..5000).map(|i| (i % 2) as u8).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let a = evaluate(&p, &x, &labels, ExecMode::Serial).unwrap();
        let b = evaluate(&p, &x, &labels, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn per_class_f1_bounded(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..200)) {
            let (p, t): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let m = confusion(&p, &t).unwrap();
            for class in [0, 1] {
                let (c, _) = class_scores(&m, class);
                prop_assert!(c.f1 <= c.precision.max(c.recall) + 1e-15);
            }
            let s = scores(&m).unwrap();
            let swapped = scores(&confusion(
                &p.iter().map(|x| 1 - x).collect::<Vec<_>>(),
                &t.iter().map(|x| 1 - x).collect::<Vec<_>>(),
            ).unwrap()).unwrap();
            prop_assert_eq!(s.accuracy, swapped.accuracy);
        }
    }
}
