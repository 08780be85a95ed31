//! Meta-calibrators built from the base methods. Reduced calibration works
//! through a lens; class-wise calibration fits one model per argmax sector.
//! The two compose.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrators::{BaselineModel, BinaryModel, MethodConfig};
use crate::error::{CalibError, Result};
use crate::lenses::{
    apply_lens, in_condition_set, lift, reduce_confidence, LensKind, LiftKind, LiftReport,
    ReducedMap, ReducedSample,
};
use crate::simplex::{BinaryPairs, ConfidenceVector, PredictionDataset};

pub const DEFAULT_MIN_SECTOR_SAMPLES: usize = 50;

/// Predicted classes with fewer reduced samples than this share the global
/// top-label model.
const MIN_TOPLABEL_SAMPLES: usize = 10;

/// A fitted post-processing map on the simplex.
pub trait Calibrator {
    fn transform(&self, c: &ConfidenceVector) -> Result<ConfidenceVector>;

    /// Transforms every row; labels are kept, logits dropped.
    fn transform_dataset(&self, dataset: &PredictionDataset) -> Result<PredictionDataset> {
        let rows = dataset
            .confidences()
            .iter()
            .map(|c| self.transform(c))
            .collect::<Result<Vec<_>>>()?;
        dataset.with_confidences(rows)
    }
}

/// The fitted model behind a reduced calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReducedBase {
    /// One binary model on the scalar reduced confidence.
    Scalar(BinaryModel),
    /// One binary model per rank position `j` on `(c̃_j, 1{ỹ = j})`.
    TopK(Vec<BinaryModel>),
    /// One binary model per predicted class; `None` uses `fallback`.
    TopLabel {
        per_class: Vec<Option<BinaryModel>>,
        fallback: BinaryModel,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedCalibrator {
    pub lens: LensKind,
    pub weighted: bool,
    pub base: ReducedBase,
}

impl ReducedCalibrator {
    pub fn lift_kind(&self) -> LiftKind {
        LiftKind::new(self.lens, self.weighted).expect("validated at fit time")
    }

    /// Whether `c` lies in the lift's condition set under this model.
    pub fn in_condition_set(&self, c: &ConfidenceVector) -> bool {
        let (reduced, aux) = reduce_confidence(self.lens, c);
        in_condition_set(self.lift_kind(), &self.recalibrate(&reduced, aux), c)
    }
}

impl ReducedMap for ReducedCalibrator {
    fn recalibrate(&self, reduced: &[f64], aux_class: Option<usize>) -> Vec<f64> {
        match &self.base {
            ReducedBase::Scalar(m) => vec![m.apply(reduced[0])],
            ReducedBase::TopK(models) => {
                let mut out: Vec<f64> = models
                    .iter()
                    .zip(reduced)
                    .map(|(m, &x)| m.apply(x))
                    .collect();
                // Independent per-position fits may overshoot the simplex.
                let total: f64 = out.iter().sum();
                if total > 1.0 {
                    out.iter_mut().for_each(|v| *v /= total);
                }
                out
            }
            ReducedBase::TopLabel {
                per_class,
                fallback,
            } => {
                let model = aux_class
                    .and_then(|a| per_class.get(a - 1))
                    .and_then(Option::as_ref)
                    .unwrap_or(fallback);
                vec![model.apply(reduced[0])]
            }
        }
    }
}

impl Calibrator for ReducedCalibrator {
    fn transform(&self, c: &ConfidenceVector) -> Result<ConfidenceVector> {
        lift(self.lift_kind(), self, c)
    }
}

fn scalar_pairs(
    samples: &[ReducedSample],
    pick: impl Fn(&ReducedSample) -> bool,
) -> Result<BinaryPairs> {
    let (scores, outcomes) = samples
        .iter()
        .filter(|s| pick(s))
        .map(|s| (s.reduced_confidence[0], s.reduced_label == 1))
        .unzip();
    BinaryPairs::new(scores, outcomes)
}

/// Applies the lens to every sample, fits the binary method on the reduced
/// pairs, and lifts the result back to the full simplex.
pub fn fit_reduced(
    lens: LensKind,
    config: &MethodConfig,
    dataset: &PredictionDataset,
    weighted: bool,
) -> Result<ReducedCalibrator> {
    lens.validate(dataset.n_classes())?;
    LiftKind::new(lens, weighted)?;
    let samples: Vec<ReducedSample> = dataset
        .iter()
        .map(|(y, c)| apply_lens(lens, y, c))
        .collect();
    let base = match lens {
        LensKind::Confidence | LensKind::SumK(_) => ReducedBase::Scalar(BinaryModel::fit(
            config,
            &scalar_pairs(&samples, |_| true)?,
        )?),
        LensKind::TopK(k) => {
            let models = (0..k)
                .map(|j| {
                    let (scores, outcomes) = samples
                        .iter()
                        .map(|s| (s.reduced_confidence[j], s.reduced_label == j + 1))
                        .unzip();
                    BinaryModel::fit(config, &BinaryPairs::new(scores, outcomes)?)
                })
                .collect::<Result<Vec<_>>>()?;
            ReducedBase::TopK(models)
        }
        LensKind::TopLabel => {
            let fallback = BinaryModel::fit(config, &scalar_pairs(&samples, |_| true)?)?;
            let per_class = (1..=dataset.n_classes())
                .map(|a| {
                    let pairs = scalar_pairs(&samples, |s| s.aux_class == Some(a)).ok()?;
                    if pairs.len() < MIN_TOPLABEL_SAMPLES {
                        return None;
                    }
                    BinaryModel::fit(config, &pairs).ok()
                })
                .collect();
            ReducedBase::TopLabel {
                per_class,
                fallback,
            }
        }
    };
    Ok(ReducedCalibrator {
        lens,
        weighted,
        base,
    })
}

/// One calibrator per argmax sector, with a global model for sectors that
/// were too small (or degenerate) to fit on their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClasswiseCalibrator {
    /// Indexed by predicted class (0-based); `None` means "use fallback".
    pub sector_models: Vec<Option<FittedCalibrator>>,
    pub fallback: Box<FittedCalibrator>,
    pub min_sector_samples: usize,
}

impl ClasswiseCalibrator {
    pub fn sector_model(&self, c: &ConfidenceVector) -> &FittedCalibrator {
        self.sector_models[c.argmax()]
            .as_ref()
            .unwrap_or(&self.fallback)
    }

    /// Sectors (1-based) served by the fallback.
    pub fn fallback_sectors(&self) -> Vec<usize> {
        self.sector_models
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_none())
            .map(|(k, _)| k + 1)
            .collect()
    }
}

impl Calibrator for ClasswiseCalibrator {
    fn transform(&self, c: &ConfidenceVector) -> Result<ConfidenceVector> {
        self.sector_model(c).transform(c)
    }
}

/// Partitions the training data by predicted class and fits `factory` on
/// each sector holding at least `min_sector_samples` points. Sector fits
/// that fail (for instance because a sector holds a single label) use the
/// global fallback, which is `factory` fitted on the whole dataset.
pub fn fit_classwise<F>(
    factory: F,
    dataset: &PredictionDataset,
    min_sector_samples: usize,
) -> Result<ClasswiseCalibrator>
where
    F: Fn(&PredictionDataset) -> Result<FittedCalibrator> + Sync,
{
    let fallback = factory(dataset)?;
    fit_classwise_with(factory, fallback, dataset, min_sector_samples)
}

/// [`fit_classwise`] with an already fitted global fallback.
pub fn fit_classwise_with<F>(
    factory: F,
    fallback: FittedCalibrator,
    dataset: &PredictionDataset,
    min_sector_samples: usize,
) -> Result<ClasswiseCalibrator>
where
    F: Fn(&PredictionDataset) -> Result<FittedCalibrator> + Sync,
{
    let fallback = Box::new(fallback);
    let mut sectors: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes()];
    for (i, c) in dataset.confidences().iter().enumerate() {
        sectors[c.argmax()].push(i);
    }
    let sector_models = sectors
        .par_iter()
        .map(|idx| {
            if idx.is_empty() || idx.len() < min_sector_samples {
                return None;
            }
            factory(&dataset.subset(idx)).ok()
        })
        .collect();
    Ok(ClasswiseCalibrator {
        sector_models,
        fallback,
        min_sector_samples,
    })
}

/// Class-wise wrapper whose per-sector model is a reduced calibrator.
pub fn fit_classwise_reduced(
    lens: LensKind,
    config: &MethodConfig,
    dataset: &PredictionDataset,
    weighted: bool,
    min_sector_samples: usize,
) -> Result<ClasswiseCalibrator> {
    fit_classwise(
        |ds| fit_reduced(lens, config, ds, weighted).map(FittedCalibrator::Reduced),
        dataset,
        min_sector_samples,
    )
}

/// Any fitted calibrator; the serialized model format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedCalibrator {
    Identity,
    Baseline(BaselineModel),
    Reduced(ReducedCalibrator),
    Classwise(ClasswiseCalibrator),
}

impl Calibrator for FittedCalibrator {
    fn transform(&self, c: &ConfidenceVector) -> Result<ConfidenceVector> {
        match self {
            FittedCalibrator::Identity => Ok(c.clone()),
            FittedCalibrator::Baseline(m) => Ok(m.apply(c)),
            FittedCalibrator::Reduced(m) => m.transform(c),
            FittedCalibrator::Classwise(m) => m.transform(c),
        }
    }
}

impl FittedCalibrator {
    /// `Some(in Ũ)` for lifted calibrators, `None` when no lift is involved.
    fn sample_in_condition_set(&self, c: &ConfidenceVector) -> Option<bool> {
        match self {
            FittedCalibrator::Reduced(m) => Some(m.in_condition_set(c)),
            FittedCalibrator::Classwise(m) => m.sector_model(c).sample_in_condition_set(c),
            _ => None,
        }
    }

    /// Empirical mass of the lift's condition set on `dataset`, or `None` if
    /// the calibrator involves no lift.
    pub fn condition_mass(&self, dataset: &PredictionDataset) -> Option<LiftReport> {
        let mut lifted = false;
        let mut violating = Vec::new();
        for (i, c) in dataset.confidences().iter().enumerate() {
            if let Some(inside) = self.sample_in_condition_set(c) {
                lifted = true;
                if !inside {
                    violating.push(i);
                }
            }
        }
        lifted.then(|| LiftReport::from_violations(dataset.len(), violating))
    }
}

/// How a base method is wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Wrapper {
    Baseline,
    Reduced,
    Classwise,
    ClasswiseReduced,
    WeightedReduced,
}

impl Wrapper {
    pub const ALL: [Wrapper; 5] = [
        Wrapper::Baseline,
        Wrapper::Reduced,
        Wrapper::Classwise,
        Wrapper::ClasswiseReduced,
        Wrapper::WeightedReduced,
    ];

    /// Whether the wrapper goes through a lift.
    pub fn is_lifted(self) -> bool {
        matches!(
            self,
            Wrapper::Reduced | Wrapper::ClasswiseReduced | Wrapper::WeightedReduced
        )
    }
}

impl fmt::Display for Wrapper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Wrapper::Baseline => "baseline",
            Wrapper::Reduced => "reduced",
            Wrapper::Classwise => "classwise",
            Wrapper::ClasswiseReduced => "classwise-reduced",
            Wrapper::WeightedReduced => "weighted-reduced",
        })
    }
}

impl FromStr for Wrapper {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        Wrapper::ALL
            .into_iter()
            .find(|w| w.to_string() == s)
            .ok_or_else(|| CalibError::UnknownName {
                kind: "wrapper",
                value: s.into(),
                expected: "baseline, reduced, classwise, classwise-reduced, weighted-reduced",
            })
    }
}

/// Everything needed to fit one (method, wrapper) combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratorSpec {
    pub wrapper: Wrapper,
    pub method: MethodConfig,
    /// Lens for the reduced wrappers; the weighted wrapper always uses the
    /// confidence lens.
    pub lens: LensKind,
    pub min_sector_samples: usize,
}

impl CalibratorSpec {
    pub fn new(wrapper: Wrapper, method: MethodConfig) -> Self {
        Self {
            wrapper,
            method,
            lens: LensKind::Confidence,
            min_sector_samples: DEFAULT_MIN_SECTOR_SAMPLES,
        }
    }

    pub fn with_lens(mut self, lens: LensKind) -> Self {
        self.lens = lens;
        self
    }

    pub fn with_min_sector_samples(mut self, n: usize) -> Self {
        self.min_sector_samples = n;
        self
    }

    pub fn fit(&self, dataset: &PredictionDataset) -> Result<FittedCalibrator> {
        let cfg = &self.method;
        Ok(match self.wrapper {
            Wrapper::Baseline => FittedCalibrator::Baseline(BaselineModel::fit(cfg, dataset)?),
            Wrapper::Reduced => {
                FittedCalibrator::Reduced(fit_reduced(self.lens, cfg, dataset, false)?)
            }
            Wrapper::WeightedReduced => {
                FittedCalibrator::Reduced(fit_reduced(LensKind::Confidence, cfg, dataset, true)?)
            }
            Wrapper::Classwise => {
                let global = BaselineModel::fit(cfg, dataset)?;
                FittedCalibrator::Classwise(fit_classwise_with(
                    |ds| {
                        BaselineModel::fit_with_fallback(cfg, ds, &global)
                            .map(FittedCalibrator::Baseline)
                    },
                    FittedCalibrator::Baseline(global.clone()),
                    dataset,
                    self.min_sector_samples,
                )?)
            }
            Wrapper::ClasswiseReduced => FittedCalibrator::Classwise(fit_classwise_reduced(
                self.lens,
                cfg,
                dataset,
                false,
                self.min_sector_samples,
            )?),
        })
    }
}
