use serde::{Deserialize, Serialize};

use super::optimize::golden_section_min;
use crate::error::{CalibError, Result};
use crate::simplex::{
    clipped_ln, softmax_unchecked, BinaryPairs, ConfidenceVector, PredictionDataset,
};

/// Search range for `ln T`.
const LOG_T_RANGE: (f64, f64) = (-6.0, 6.0);
const LOG_T_TOL: f64 = 1e-6;

/// Temperature scaling `c ↦ softmax(ln(c) / T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub temperature: f64,
}

impl TemperatureModel {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(CalibError::InvalidArgument(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(Self { temperature })
    }

    pub fn apply(&self, c: &ConfidenceVector) -> ConfidenceVector {
        apply_temperature(self, c)
    }

    /// Temperature scaling of the two-point simplex `(s, 1 - s)`; returns the
    /// first coordinate.
    pub fn apply_binary(&self, s: f64) -> f64 {
        let z = [
            clipped_ln(s) / self.temperature,
            clipped_ln(1.0 - s) / self.temperature,
        ];
        softmax_unchecked(&z)[0]
    }
}

pub fn apply_temperature(model: &TemperatureModel, c: &ConfidenceVector) -> ConfidenceVector {
    let z: Vec<f64> = c
        .as_slice()
        .iter()
        .map(|&p| clipped_ln(p) / model.temperature)
        .collect();
    ConfidenceVector::from_trusted(softmax_unchecked(&z))
}

/// Log-scores with row stride `k` and 0-based targets.
pub(crate) struct ScoreMatrix {
    pub k: usize,
    pub z: Vec<f64>,
    pub targets: Vec<usize>,
}

impl ScoreMatrix {
    /// Uses logits when present, otherwise clipped log-confidences; the two
    /// differ only by a per-row shift that softmax cancels.
    pub fn from_dataset(dataset: &PredictionDataset) -> Self {
        let k = dataset.n_classes();
        let z = match dataset.logits() {
            Some(logits) => logits.iter().flatten().copied().collect(),
            None => dataset
                .confidences()
                .iter()
                .flat_map(|c| c.as_slice().iter().map(|&p| clipped_ln(p)))
                .collect(),
        };
        let targets = dataset.labels().iter().map(|y| y - 1).collect();
        Self { k, z, targets }
    }

    /// The reduced binary problem as the two-point simplex `(s, 1 - s)`;
    /// target 0 means a positive outcome.
    pub fn from_pairs(pairs: &BinaryPairs) -> Self {
        let z = pairs
            .scores()
            .iter()
            .flat_map(|&s| [clipped_ln(s), clipped_ln(1.0 - s)])
            .collect();
        let targets = pairs.outcomes().iter().map(|&o| usize::from(!o)).collect();
        Self { k: 2, z, targets }
    }

    /// Mean negative log-likelihood of `softmax(z / T)`.
    pub fn nll(&self, temperature: f64) -> f64 {
        let beta = 1.0 / temperature;
        let total: f64 = self
            .z
            .chunks_exact(self.k)
            .zip(&self.targets)
            .map(|(row, &t)| {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) * beta;
                let lse = max
                    + row
                        .iter()
                        .map(|&v| (v * beta - max).exp())
                        .sum::<f64>()
                        .ln();
                lse - row[t] * beta
            })
            .sum();
        total / self.targets.len() as f64
    }

    fn fit(&self, argmax_preserving: bool) -> Result<TemperatureModel> {
        if self.targets.len() < 2 {
            return Err(CalibError::Degenerate(
                "temperature scaling needs at least 2 samples".into(),
            ));
        }
        let first = self.targets[0];
        if self.targets.iter().all(|&t| t == first) {
            return Err(CalibError::Degenerate(
                "temperature scaling needs more than one class present".into(),
            ));
        }
        let log_t = golden_section_min(
            |u| self.nll(u.exp()),
            LOG_T_RANGE.0,
            LOG_T_RANGE.1,
            LOG_T_TOL,
        );
        let mut temperature = log_t.exp();
        if argmax_preserving {
            temperature = temperature.max(1.0);
        }
        TemperatureModel::new(temperature)
    }
}

/// Fits `T` by minimizing the mean negative log-likelihood over
/// `ln T ∈ [-6, 6]`. With `argmax_preserving` the result is floored at 1.
pub fn fit_temperature(
    dataset: &PredictionDataset,
    argmax_preserving: bool,
) -> Result<TemperatureModel> {
    ScoreMatrix::from_dataset(dataset).fit(argmax_preserving)
}

/// Temperature scaling of a reduced binary problem seen as the two-point
/// simplex `(s, 1 - s)`.
pub fn fit_binary_temperature(
    pairs: &BinaryPairs,
    argmax_preserving: bool,
) -> Result<TemperatureModel> {
    ScoreMatrix::from_pairs(pairs).fit(argmax_preserving)
}
