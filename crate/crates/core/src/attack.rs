//! Label-flipping poisoning: inside one client's shard, relabel malicious
//! rows whose source port matches a target as benign.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::preprocess::ScalerParams;

pub const PORT_COLUMN: &str = "tcp_srcport";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchMode {
    /// Compare the source port in raw units (features are unscaled through
    /// the scaler when one is supplied).
    RawPortMatch,
    /// Compare the already-scaled value rounded to `decimals` places.
    ScaledValueMatch { value: f64, decimals: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub target_client: usize,
    pub match_port: u16,
    pub mode: MatchMode,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self { target_client: 0, match_port: 23, mode: MatchMode::RawPortMatch }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipOutcome {
    /// Rows whose port matched, whatever their label.
    pub matched: usize,
    /// Matched rows whose label actually went from 1 to 0.
    pub changed: usize,
}

fn round_to(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round()
}

/// Flip labels 1 -> 0 for every matching row in `shard`.
///
/// Labels are the only stored target; one-hot rows are derived from them at
/// training time, so both forms change together. Rows outside `shard` are
/// never touched.
pub fn apply_label_flip(
    data: &mut Dataset,
    shard: Range<usize>,
    spec: &AttackSpec,
    scaler: Option<&ScalerParams>,
) -> Result<FlipOutcome> {
    if shard.end > data.len() || shard.start > shard.end {
        return Err(Error::Input(format!("shard {shard:?} outside a dataset of {} rows", data.len())));
    }
    let col =
        data.column_index(PORT_COLUMN).ok_or_else(|| Error::Input(format!("dataset has no {PORT_COLUMN} column")))?;

    let matches: Box<dyn Fn(f64) -> bool> = match spec.mode {
        MatchMode::RawPortMatch => {
            let port = f64::from(spec.match_port);
            match scaler {
                Some(s) => {
                    let s = s.clone();
                    Box::new(move |x| s.unscale_value(col, x).round() == port)
                }
                None => Box::new(move |x| x == port),
            }
        }
        MatchMode::ScaledValueMatch { value, decimals } => {
            if scaler.is_none() {
                return Err(Error::State(
                    "scaled-value matching needs the fitted scaler of the scaled features".into(),
                ));
            }
            let target = round_to(value, decimals);
            Box::new(move |x| round_to(x, decimals) == target)
        }
    };

    let mut outcome = FlipOutcome::default();
    for row in shard {
        if matches(data.features.get(row, col)) {
            outcome.matched += 1;
            if data.labels[row] == 1 {
                data.labels[row] = 0;
                outcome.changed += 1;
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PREDICTORS;
    use crate::nn::Matrix;
    use crate::preprocess::{fit_scaler, transform};

    fn data(ports: &[f64], labels: &[u8]) -> Dataset {
        let rows: Vec<[f64; 6]> = ports.iter().map(|&p| [60.0, 40.0, 64.0, 6.0, p, 80.0]).collect();
        Dataset::new(
            PREDICTORS.iter().map(|s| s.to_string()).collect(),
            Matrix::from_rows(&rows).unwrap(),
            labels.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn counts_matched_and_changed() {
        let mut d = data(&[23.0, 80.0, 23.0, 23.0, 443.0], &[1, 1, 0, 1, 1]);
        let out = apply_label_flip(&mut d, 0..5, &AttackSpec::default(), None).unwrap();
        assert_eq!(out, FlipOutcome { matched: 3, changed: 2 });
        assert_eq!(d.labels, vec![0, 1, 0, 0, 1]);
        let again = apply_label_flip(&mut d, 0..5, &AttackSpec::default(), None).unwrap();
        assert_eq!(again, FlipOutcome { matched: 3, changed: 0 });
    }

    #[test]
    fn no_matches_leaves_shard_alone() {
        let mut d = data(&[80.0, 443.0], &[1, 1]);
        let before = d.clone();
        let out = apply_label_flip(&mut d, 0..2, &AttackSpec::default(), None).unwrap();
        assert_eq!(out, FlipOutcome::default());
        assert_eq!(d, before);
    }

    #[test]
    fn rows_outside_shard_are_untouched() {
        let mut d = data(&[23.0, 23.0, 23.0, 23.0], &[1, 1, 1, 1]);
        let out = apply_label_flip(&mut d, 1..3, &AttackSpec::default(), None).unwrap();
        assert_eq!(out.changed, 2);
        assert_eq!(d.labels, vec![1, 0, 0, 1]);
    }

    #[test]
    fn raw_match_through_scaler_and_scaled_match() {
        let raw = data(&[0.0, 23.0, 63_713.0, 23.0], &[1, 1, 1, 1]);
        let scaler = fit_scaler(&raw.features).unwrap();
        let mut scaled = raw.clone();
        scaled.features = transform(&scaler, &raw.features).unwrap();

        let mut a = scaled.clone();
        let out = apply_label_flip(&mut a, 0..4, &AttackSpec::default(), Some(&scaler)).unwrap();
        assert_eq!(out.changed, 2);

        // 23 / 63713 = 0.000361
        let spec =
            AttackSpec { mode: MatchMode::ScaledValueMatch { value: 0.000361, decimals: 6 }, ..AttackSpec::default() };
        let mut b = scaled.clone();
        assert_eq!(apply_label_flip(&mut b, 0..4, &spec, Some(&scaler)).unwrap().changed, 2);
        assert!(matches!(apply_label_flip(&mut b, 0..4, &spec, None), Err(Error::State(_))));
    }
}
