//! Base recalibration methods.
//!
//! Binary methods act on a score in `[0, 1]`; [`BaselineModel`] adapts them
//! to K classes (temperature scaling natively, the others one-vs-all).

mod beta;
mod histogram;
mod isotonic;
mod one_vs_all;
mod optimize;
mod temperature;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use beta::{apply_beta, fit_beta, BetaModel};
pub use histogram::{apply_histogram, fit_histogram, HistogramModel};
pub use isotonic::{apply_isotonic, fit_isotonic, pava, IsotonicModel};
pub use one_vs_all::{fit_one_vs_all, fit_one_vs_all_with_fallback, OneVsAllModel};
pub use temperature::{
    apply_temperature, fit_binary_temperature, fit_temperature, TemperatureModel,
};

use crate::binning::BinScheme;
use crate::error::{CalibError, Result};
use crate::simplex::{BinaryPairs, ConfidenceVector, PredictionDataset};

/// Histogram recalibration bin count used unless configured otherwise.
pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// No-op; a reference point for benchmarks.
    Identity,
    Temperature,
    Histogram,
    Isotonic,
    Beta,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Identity,
        Method::Temperature,
        Method::Histogram,
        Method::Isotonic,
        Method::Beta,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Identity => "identity",
            Method::Temperature => "temperature",
            Method::Histogram => "histogram",
            Method::Isotonic => "isotonic",
            Method::Beta => "beta",
        })
    }
}

impl FromStr for Method {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| CalibError::UnknownName {
                kind: "method",
                value: s.into(),
                expected: "temperature, histogram, isotonic, beta, identity",
            })
    }
}

/// A method plus its tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub histogram_bins: usize,
    pub histogram_scheme: BinScheme,
    /// Floor fitted temperatures at 1.
    pub argmax_preserving: bool,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            histogram_scheme: BinScheme::EqualWidth,
            argmax_preserving: false,
        }
    }
}

impl From<Method> for MethodConfig {
    fn from(method: Method) -> Self {
        Self::new(method)
    }
}

/// A fitted map `[0, 1] → [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum BinaryModel {
    Identity,
    Temperature(TemperatureModel),
    Histogram(HistogramModel),
    Isotonic(IsotonicModel),
    Beta(BetaModel),
}

impl BinaryModel {
    pub fn fit(config: &MethodConfig, pairs: &BinaryPairs) -> Result<Self> {
        Ok(match config.method {
            Method::Identity => BinaryModel::Identity,
            Method::Temperature => {
                BinaryModel::Temperature(fit_binary_temperature(pairs, config.argmax_preserving)?)
            }
            Method::Histogram => BinaryModel::Histogram(fit_histogram(
                pairs,
                config.histogram_bins,
                config.histogram_scheme,
            )?),
            Method::Isotonic => BinaryModel::Isotonic(fit_isotonic(pairs)?),
            Method::Beta => BinaryModel::Beta(fit_beta(pairs)?),
        })
    }

    pub fn apply(&self, score: f64) -> f64 {
        match self {
            BinaryModel::Identity => score.clamp(0.0, 1.0),
            BinaryModel::Temperature(m) => m.apply_binary(score),
            BinaryModel::Histogram(m) => m.apply(score),
            BinaryModel::Isotonic(m) => m.apply(score),
            BinaryModel::Beta(m) => m.apply(score),
        }
    }
}

/// Multiclass form of a method: temperature scaling acts on the whole
/// vector, everything else is one-vs-all with renormalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "adapter", rename_all = "kebab-case")]
pub enum BaselineModel {
    Identity,
    Temperature(TemperatureModel),
    OneVsAll(OneVsAllModel),
}

impl BaselineModel {
    pub fn fit(config: &MethodConfig, dataset: &PredictionDataset) -> Result<Self> {
        Ok(match config.method {
            Method::Identity => BaselineModel::Identity,
            Method::Temperature => {
                BaselineModel::Temperature(fit_temperature(dataset, config.argmax_preserving)?)
            }
            _ => BaselineModel::OneVsAll(fit_one_vs_all(config, dataset)?),
        })
    }

    /// Fits on `dataset` (typically one class-wise sector). One-vs-all
    /// classes too rare to fit reuse the submodels of `global`.
    pub fn fit_with_fallback(
        config: &MethodConfig,
        dataset: &PredictionDataset,
        global: &BaselineModel,
    ) -> Result<Self> {
        match global {
            BaselineModel::OneVsAll(g) => Ok(BaselineModel::OneVsAll(
                fit_one_vs_all_with_fallback(config, dataset, g)?,
            )),
            _ => Self::fit(config, dataset),
        }
    }

    pub fn apply(&self, c: &ConfidenceVector) -> ConfidenceVector {
        match self {
            BaselineModel::Identity => c.clone(),
            BaselineModel::Temperature(m) => m.apply(c),
            BaselineModel::OneVsAll(m) => m.apply(c),
        }
    }
}
