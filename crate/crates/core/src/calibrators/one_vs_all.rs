use serde::{Deserialize, Serialize};

use super::{BinaryModel, MethodConfig};
use crate::error::{CalibError, Result};
use crate::simplex::{BinaryPairs, ConfidenceVector, PredictionDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsAllModel {
    pub per_class_models: Vec<BinaryModel>,
    pub normalize: bool,
}

/// Fits the binary method on `(c_k, 1{y = k})` for every class k. Each class
/// must appear at least twice.
pub fn fit_one_vs_all(config: &MethodConfig, dataset: &PredictionDataset) -> Result<OneVsAllModel> {
    let counts = dataset.class_counts();
    if let Some(k) = counts.iter().position(|&n| n < 2) {
        return Err(CalibError::Degenerate(format!(
            "one-vs-all needs every class at least twice; class {} has {}",
            k + 1,
            counts[k]
        )));
    }
    let per_class_models = (1..=dataset.n_classes())
        .map(|k| BinaryModel::fit(config, &BinaryPairs::one_vs_rest(dataset, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(OneVsAllModel {
        per_class_models,
        normalize: true,
    })
}

/// Like [`fit_one_vs_all`], but a class present fewer than twice (or absent
/// from the negatives fewer than twice), or whose fit fails, reuses the
/// matching submodel of `fallback`. Used for class-wise sectors, where rare
/// labels are common.
pub fn fit_one_vs_all_with_fallback(
    config: &MethodConfig,
    dataset: &PredictionDataset,
    fallback: &OneVsAllModel,
) -> Result<OneVsAllModel> {
    if fallback.per_class_models.len() != dataset.n_classes() {
        return Err(CalibError::InvalidArgument(format!(
            "fallback has {} submodels for {} classes",
            fallback.per_class_models.len(),
            dataset.n_classes()
        )));
    }
    let n = dataset.len();
    let counts = dataset.class_counts();
    let per_class_models = (1..=dataset.n_classes())
        .map(|k| {
            let pos = counts[k - 1];
            if pos >= 2 && n - pos >= 2 {
                if let Ok(m) = BinaryModel::fit(config, &BinaryPairs::one_vs_rest(dataset, k)) {
                    return m;
                }
            }
            fallback.per_class_models[k - 1].clone()
        })
        .collect();
    Ok(OneVsAllModel {
        per_class_models,
        normalize: fallback.normalize,
    })
}

impl OneVsAllModel {
    /// Maps each coordinate through its model and renormalizes; an all-zero
    /// result becomes uniform.
    pub fn apply(&self, c: &ConfidenceVector) -> ConfidenceVector {
        let mut out: Vec<f64> = self
            .per_class_models
            .iter()
            .zip(c.as_slice())
            .map(|(m, &x)| m.apply(x))
            .collect();
        let sum: f64 = out.iter().sum();
        if sum <= 0.0 {
            let k = out.len() as f64;
            out.iter_mut().for_each(|v| *v = 1.0 / k);
        } else if self.normalize {
            out.iter_mut().for_each(|v| *v /= sum);
        }
        ConfidenceVector::from_trusted(out)
    }
}
