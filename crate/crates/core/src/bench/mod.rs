//! Stratified cross-validation of every (method, wrapper) pair.

mod folds;
mod render;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use folds::{split, stratified_folds};
pub use render::{render_report, ReportFormat};

use crate::calibrators::{Method, MethodConfig, DEFAULT_HISTOGRAM_BINS};
use crate::error::{CalibError, Result};
use crate::lenses::LensKind;
use crate::metrics::{accuracy, binned_ece, classwise_ece, nll, BinningConfig, DEFAULT_BINS};
use crate::simplex::PredictionDataset;
use crate::wrappers::{Calibrator, CalibratorSpec, Wrapper, DEFAULT_MIN_SECTOR_SAMPLES};

pub const DEFAULT_FOLDS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub methods: Vec<Method>,
    /// The baseline wrapper is always evaluated, since relatives refer to it.
    pub wrappers: Vec<Wrapper>,
    pub lens: LensKind,
    pub folds: usize,
    pub binning: BinningConfig,
    pub seed: u64,
    pub min_sector_samples: usize,
    pub histogram_bins: usize,
    pub argmax_preserving: bool,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            methods: vec![
                Method::Beta,
                Method::Isotonic,
                Method::Histogram,
                Method::Temperature,
            ],
            wrappers: vec![
                Wrapper::Baseline,
                Wrapper::Reduced,
                Wrapper::Classwise,
                Wrapper::ClasswiseReduced,
            ],
            lens: LensKind::Confidence,
            folds: DEFAULT_FOLDS,
            binning: BinningConfig::new(DEFAULT_BINS),
            seed: 0,
            min_sector_samples: DEFAULT_MIN_SECTOR_SAMPLES,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            argmax_preserving: false,
        }
    }
}

impl BenchmarkSpec {
    /// Four folds and 20 bins, the setting used for larger image benchmarks.
    pub fn cifar_style(mut self) -> Self {
        self.folds = 4;
        self.binning.n_bins = 20;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(CalibError::InvalidArgument(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        self.binning.validate()?;
        if self.methods.is_empty() {
            return Err(CalibError::InvalidArgument("no methods selected".into()));
        }
        Ok(())
    }

    /// Requested wrappers with the baseline first and duplicates removed.
    pub fn effective_wrappers(&self) -> Vec<Wrapper> {
        let mut out = vec![Wrapper::Baseline];
        for &w in &self.wrappers {
            if !out.contains(&w) {
                out.push(w);
            }
        }
        out
    }

    pub fn calibrator_spec(&self, method: Method, wrapper: Wrapper) -> CalibratorSpec {
        let mut cfg = MethodConfig::new(method);
        cfg.histogram_bins = self.histogram_bins;
        cfg.argmax_preserving = self.argmax_preserving;
        CalibratorSpec::new(wrapper, cfg)
            .with_lens(self.lens)
            .with_min_sector_samples(self.min_sector_samples)
    }
}

/// Metrics of one (method, wrapper, fold) cell on the held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub wrapper: Wrapper,
    pub fold: usize,
    pub ece: f64,
    pub cwece: f64,
    pub cwece_per_class: Vec<f64>,
    pub accuracy: f64,
    pub nll: f64,
    /// Held-out mass of the lift's condition set; only for lifted wrappers.
    pub condition_mass: Option<f64>,
}

/// Mean and sample standard deviation over folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Percentage change against the same method's baseline. `mean` compares
/// fold means, `(mean_w - mean_b) / mean_b * 100`; `std` is the sample
/// standard deviation of the per-fold relatives. `None` when the baseline is
/// exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relative {
    pub mean: f64,
    pub std: f64,
}

fn relative(wrapped: &[f64], baseline: &[f64]) -> Option<Relative> {
    let mw = Stat::of(wrapped).mean;
    let mb = Stat::of(baseline).mean;
    if mb == 0.0 {
        return None;
    }
    let per_fold: Vec<f64> = wrapped
        .iter()
        .zip(baseline)
        .filter(|(_, &b)| b != 0.0)
        .map(|(w, b)| (w - b) / b * 100.0)
        .collect();
    let std = if per_fold.is_empty() {
        0.0
    } else {
        Stat::of(&per_fold).std
    };
    Some(Relative {
        mean: (mw - mb) / mb * 100.0,
        std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub wrapper: Wrapper,
    pub ece: Stat,
    pub cwece: Stat,
    pub accuracy: Stat,
    pub nll: Stat,
    pub condition_mass: Option<Stat>,
    pub ece_relative: Option<Relative>,
    pub cwece_relative: Option<Relative>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub spec: BenchmarkSpec,
    pub n_samples: usize,
    pub n_classes: usize,
    /// Ordered by method, wrapper, fold as listed in `spec`.
    pub cells: Vec<CellResult>,
    /// Ordered by method, wrapper.
    pub aggregates: Vec<Aggregate>,
}

impl BenchmarkReport {
    pub fn aggregate(&self, method: Method, wrapper: Wrapper) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.wrapper == wrapper)
    }

    pub fn cells_for(
        &self,
        method: Method,
        wrapper: Wrapper,
    ) -> impl Iterator<Item = &CellResult> + '_ {
        self.cells
            .iter()
            .filter(move |c| c.method == method && c.wrapper == wrapper)
    }
}

/// Fits on `train` and scores the recalibrated `test` split.
pub fn evaluate_cell(
    spec: &BenchmarkSpec,
    method: Method,
    wrapper: Wrapper,
    train: &PredictionDataset,
    test: &PredictionDataset,
) -> Result<CellResult> {
    let model = spec.calibrator_spec(method, wrapper).fit(train)?;
    let out = model.transform_dataset(test)?;
    let (cwece, cwece_per_class) = classwise_ece(&out, &spec.binning);
    Ok(CellResult {
        method,
        wrapper,
        fold: 0,
        ece: binned_ece(&out, &spec.binning),
        cwece,
        cwece_per_class,
        accuracy: accuracy(&out),
        nll: nll(&out),
        condition_mass: model.condition_mass(test).map(|r| r.condition_mass),
    })
}

pub fn cross_validate(
    spec: &BenchmarkSpec,
    dataset: &PredictionDataset,
) -> Result<BenchmarkReport> {
    spec.validate()?;
    spec.lens.validate(dataset.n_classes())?;
    let assignment = stratified_folds(dataset, spec.folds, spec.seed)?;
    let splits: Vec<(PredictionDataset, PredictionDataset)> = (0..spec.folds)
        .map(|f| {
            let (train, test) = split(&assignment, f);
            (dataset.subset(&train), dataset.subset(&test))
        })
        .collect();
    let wrappers = spec.effective_wrappers();
    let jobs: Vec<(Method, Wrapper, usize)> = spec
        .methods
        .iter()
        .flat_map(|&m| {
            wrappers
                .iter()
                .flat_map(move |&w| (0..spec.folds).map(move |f| (m, w, f)))
        })
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(m, w, f)| {
            let (train, test) = &splits[f];
            evaluate_cell(spec, m, w, train, test)
                .map(|cell| CellResult { fold: f, ..cell })
                .map_err(|e| CalibError::InvalidDataset(format!("{m}/{w} fold {}: {e}", f + 1)))
        })
        .collect::<Result<Vec<_>>>()?;

    let column = |m: Method, w: Wrapper, get: fn(&CellResult) -> f64| -> Vec<f64> {
        cells
            .iter()
            .filter(|c| c.method == m && c.wrapper == w)
            .map(get)
            .collect()
    };
    let mut aggregates = Vec::new();
    for &m in &spec.methods {
        let base_ece = column(m, Wrapper::Baseline, |c| c.ece);
        let base_cwece = column(m, Wrapper::Baseline, |c| c.cwece);
        for &w in &wrappers {
            let ece = column(m, w, |c| c.ece);
            let cwece = column(m, w, |c| c.cwece);
            let masses: Vec<f64> = cells
                .iter()
                .filter(|c| c.method == m && c.wrapper == w)
                .filter_map(|c| c.condition_mass)
                .collect();
            aggregates.push(Aggregate {
                method: m,
                wrapper: w,
                ece: Stat::of(&ece),
                cwece: Stat::of(&cwece),
                accuracy: Stat::of(&column(m, w, |c| c.accuracy)),
                nll: Stat::of(&column(m, w, |c| c.nll)),
                condition_mass: (!masses.is_empty()).then(|| Stat::of(&masses)),
                ece_relative: relative(&ece, &base_ece),
                cwece_relative: relative(&cwece, &base_cwece),
            });
        }
    }
    Ok(BenchmarkReport {
        spec: spec.clone(),
        n_samples: dataset.len(),
        n_classes: dataset.n_classes(),
        cells,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_dirichlet, DirichletSpec};

    fn small_spec() -> BenchmarkSpec {
        BenchmarkSpec {
            methods: vec![Method::Identity, Method::Histogram],
            wrappers: Wrapper::ALL.to_vec(),
            folds: 3,
            min_sector_samples: 20,
            ..BenchmarkSpec::default()
        }
    }

    #[test]
    fn baseline_relative_is_zero() {
        let ds = gen_dirichlet(&DirichletSpec::symmetric(600, 3, 1.0, 0.5, 2)).unwrap();
        let report = cross_validate(&small_spec(), &ds).unwrap();
        assert_eq!(report.cells.len(), 2 * 5 * 3);
        for m in [Method::Identity, Method::Histogram] {
            let a = report.aggregate(m, Wrapper::Baseline).unwrap();
            assert_eq!(a.ece_relative.unwrap().mean, 0.0);
            assert_eq!(a.cwece_relative.unwrap().mean, 0.0);
            assert!(a.condition_mass.is_none());
        }
        for w in Wrapper::ALL {
            let a = report.aggregate(Method::Identity, w).unwrap();
            assert_eq!(a.ece_relative.unwrap().mean, 0.0, "{w}");
            assert_eq!(a.condition_mass.is_some(), w.is_lifted(), "{w}");
        }
    }

    #[test]
    fn baseline_is_added_when_missing() {
        let spec = BenchmarkSpec {
            wrappers: vec![Wrapper::Reduced],
            ..small_spec()
        };
        assert_eq!(
            spec.effective_wrappers(),
            vec![Wrapper::Baseline, Wrapper::Reduced]
        );
    }

    #[test]
    fn relative_of_constant_series() {
        let r = relative(&[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert_eq!((r.mean, r.std), (-50.0, 0.0));
        assert!(relative(&[0.5], &[0.0]).is_none());
    }
}
