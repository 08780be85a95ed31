//! Binned calibration-error estimators.
//!
//! All estimators reduce to the same primitive: bin `(score, outcome)` pairs,
//! compare the mean score with the empirical outcome frequency per bin, and
//! combine the gaps with bin weights `n_b / n` under an ℓp norm. Empty bins
//! carry zero weight.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binning::{bin_index, make_edges, BinScheme};
use crate::error::{CalibError, Result};
use crate::lenses::{apply_lens, LensKind, ReducedSample};
use crate::simplex::{clipped_ln, BinaryPairs, PredictionDataset};

pub const DEFAULT_BINS: usize = 25;

/// The exponent of the norm combining per-bin gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PNorm {
    Finite(f64),
    Infinity,
}

impl PNorm {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(PNorm::Infinity)
        } else if p >= 1.0 {
            Ok(PNorm::Finite(p))
        } else {
            Err(CalibError::InvalidArgument(format!(
                "norm exponent must be >= 1, got {p}"
            )))
        }
    }
}

impl Default for PNorm {
    fn default() -> Self {
        PNorm::Finite(1.0)
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PNorm::Finite(p) => write!(f, "{p}"),
            PNorm::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for PNorm {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "inf" {
            return Ok(PNorm::Infinity);
        }
        let p: f64 = s.parse().map_err(|_| CalibError::UnknownName {
            kind: "norm",
            value: s.into(),
            expected: "a number >= 1, or inf",
        })?;
        PNorm::new(p)
    }
}

impl TryFrom<String> for PNorm {
    type Error = CalibError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PNorm> for String {
    fn from(p: PNorm) -> Self {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    pub n_bins: usize,
    pub scheme: BinScheme,
    pub p_norm: PNorm,
    /// Interval covered by the bins; `[0, 1]` unless narrowed.
    pub range: (f64, f64),
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self::new(DEFAULT_BINS)
    }
}

impl BinningConfig {
    pub fn new(n_bins: usize) -> Self {
        Self {
            n_bins,
            scheme: BinScheme::EqualWidth,
            p_norm: PNorm::default(),
            range: (0.0, 1.0),
        }
    }

    pub fn with_norm(mut self, p_norm: PNorm) -> Self {
        self.p_norm = p_norm;
        self
    }

    pub fn with_scheme(mut self, scheme: BinScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 1 {
            return Err(CalibError::InvalidArgument("need at least 1 bin".into()));
        }
        if self.range.0.partial_cmp(&self.range.1) != Some(std::cmp::Ordering::Less) {
            return Err(CalibError::InvalidArgument(format!(
                "empty binning range {:?}",
                self.range
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub confidence: f64,
    pub frequency: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCurve {
    pub bins: Vec<ReliabilityBin>,
}

impl ReliabilityCurve {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// `bin_lo,bin_hi,count,confidence,frequency,gap`, one line per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,confidence,frequency,gap\n");
        for b in &self.bins {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                b.bin_lo, b.bin_hi, b.count, b.confidence, b.frequency, b.gap
            );
        }
        out
    }

    /// `(Σ_b w_b gap_b^p)^(1/p)` with `w_b = n_b / n`; the maximum gap over
    /// non-empty bins for `p = ∞`.
    pub fn error(&self, p_norm: PNorm) -> f64 {
        combine(&[self], p_norm)
    }
}

fn combine(curves: &[&ReliabilityCurve], p_norm: PNorm) -> f64 {
    let n: usize = curves.iter().map(|c| c.total_count()).sum();
    if n == 0 {
        return 0.0;
    }
    let bins = curves.iter().flat_map(|c| &c.bins).filter(|b| b.count > 0);
    match p_norm {
        PNorm::Infinity => bins.map(|b| b.gap).fold(0.0, f64::max),
        PNorm::Finite(1.0) => bins.map(|b| b.count as f64 / n as f64 * b.gap).sum(),
        PNorm::Finite(p) => bins
            .map(|b| b.count as f64 / n as f64 * b.gap.powf(p))
            .sum::<f64>()
            .powf(1.0 / p),
    }
}

/// Per-bin statistics of `(score, outcome)` pairs.
pub fn reliability_from_scores(
    scores: &[f64],
    outcomes: &[bool],
    config: &BinningConfig,
) -> ReliabilityCurve {
    debug_assert_eq!(scores.len(), outcomes.len());
    let (lo, hi) = config.range;
    let edges = make_edges(config.scheme, config.n_bins, scores, lo, hi);
    let n_bins = edges.len() - 1;
    let mut counts = vec![0usize; n_bins];
    let mut conf_sums = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    for (&s, &o) in scores.iter().zip(outcomes) {
        let b = bin_index(&edges, s);
        counts[b] += 1;
        conf_sums[b] += s;
        hits[b] += usize::from(o);
    }
    let bins = (0..n_bins)
        .map(|b| {
            let (confidence, frequency) = match counts[b] {
                0 => (0.0, 0.0),
                n => (conf_sums[b] / n as f64, hits[b] as f64 / n as f64),
            };
            ReliabilityBin {
                bin_lo: edges[b],
                bin_hi: edges[b + 1],
                count: counts[b],
                confidence,
                frequency,
                gap: (frequency - confidence).abs(),
            }
        })
        .collect();
    ReliabilityCurve { bins }
}

/// Binned calibration error of a binary problem.
pub fn binary_binned_error(pairs: &BinaryPairs, config: &BinningConfig) -> f64 {
    reliability_from_scores(pairs.scores(), pairs.outcomes(), config).error(config.p_norm)
}

/// Reliability curve of the top-class confidence.
pub fn reliability_curve(dataset: &PredictionDataset, config: &BinningConfig) -> ReliabilityCurve {
    let pairs = BinaryPairs::top_class(dataset);
    reliability_from_scores(pairs.scores(), pairs.outcomes(), config)
}

/// Expected (top-class) calibration error, binned on `max c`.
pub fn binned_ece(dataset: &PredictionDataset, config: &BinningConfig) -> f64 {
    binary_binned_error(&BinaryPairs::top_class(dataset), config)
}

/// ℓ2 binned ECE with the per-bin plug-in variance `f_b (1 - f_b) / (n_b - 1)`
/// subtracted from each squared gap. Bins with a single sample keep their
/// plain squared gap; the total is clamped at zero before the square root.
pub fn debiased_ece(dataset: &PredictionDataset, config: &BinningConfig) -> Result<f64> {
    if config.p_norm != PNorm::Finite(2.0) {
        return Err(CalibError::InvalidArgument(format!(
            "debiased ECE is only defined for p = 2, got p = {}",
            config.p_norm
        )));
    }
    let curve = reliability_curve(dataset, config);
    let n = dataset.len() as f64;
    let total: f64 = curve
        .bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            let w = b.count as f64 / n;
            let correction = if b.count >= 2 {
                b.frequency * (1.0 - b.frequency) / (b.count - 1) as f64
            } else {
                0.0
            };
            w * (b.gap * b.gap - correction)
        })
        .sum();
    Ok(total.max(0.0).sqrt())
}

/// Class-wise ECE: per class k, bin on `c_k` against `1{y = k}`; the overall
/// value is the plain mean over classes.
pub fn classwise_ece(dataset: &PredictionDataset, config: &BinningConfig) -> (f64, Vec<f64>) {
    let per_class: Vec<f64> = (1..=dataset.n_classes())
        .map(|k| binary_binned_error(&BinaryPairs::one_vs_rest(dataset, k), config))
        .collect();
    let overall = per_class.iter().sum::<f64>() / per_class.len() as f64;
    (overall, per_class)
}

pub fn accuracy(dataset: &PredictionDataset) -> f64 {
    let hits = dataset.iter().filter(|(y, c)| c.argmax() + 1 == *y).count();
    hits as f64 / dataset.len() as f64
}

/// Mean `-ln(c_y)` with `c_y` clipped at 1e-12.
pub fn nll(dataset: &PredictionDataset) -> f64 {
    let total: f64 = dataset
        .iter()
        .map(|(y, c)| -clipped_ln(c.as_slice()[y - 1]))
        .sum();
    total / dataset.len() as f64
}

/// Binned error of a reduced problem given as reduced samples.
///
/// Scalar lenses bin `(c̃, ỹ)` directly. Top-label bins separately per
/// predicted class and combines all cells with weights relative to the whole
/// sample. Top-k averages the binary errors of the k rank positions
/// `(c̃_j, 1{ỹ = j})`.
pub fn reduced_binned_error(
    lens: LensKind,
    samples: &[ReducedSample],
    config: &BinningConfig,
) -> f64 {
    match lens {
        LensKind::Confidence | LensKind::SumK(_) => {
            let scores: Vec<f64> = samples.iter().map(|s| s.reduced_confidence[0]).collect();
            let outcomes: Vec<bool> = samples.iter().map(|s| s.reduced_label == 1).collect();
            reliability_from_scores(&scores, &outcomes, config).error(config.p_norm)
        }
        LensKind::TopLabel => {
            let max_class = samples
                .iter()
                .filter_map(|s| s.aux_class)
                .max()
                .unwrap_or(0);
            let curves: Vec<ReliabilityCurve> = (1..=max_class)
                .filter_map(|a| {
                    let (scores, outcomes): (Vec<f64>, Vec<bool>) = samples
                        .iter()
                        .filter(|s| s.aux_class == Some(a))
                        .map(|s| (s.reduced_confidence[0], s.reduced_label == 1))
                        .unzip();
                    (!scores.is_empty())
                        .then(|| reliability_from_scores(&scores, &outcomes, config))
                })
                .collect();
            combine(&curves.iter().collect::<Vec<_>>(), config.p_norm)
        }
        LensKind::TopK(k) => {
            let total: f64 = (0..k)
                .map(|j| {
                    let scores: Vec<f64> =
                        samples.iter().map(|s| s.reduced_confidence[j]).collect();
                    let outcomes: Vec<bool> =
                        samples.iter().map(|s| s.reduced_label == j + 1).collect();
                    reliability_from_scores(&scores, &outcomes, config).error(config.p_norm)
                })
                .sum();
            total / k as f64
        }
    }
}

/// Binned estimate of the lens-induced calibration error.
pub fn lens_ece(lens: LensKind, dataset: &PredictionDataset, config: &BinningConfig) -> f64 {
    let samples: Vec<ReducedSample> = dataset
        .iter()
        .map(|(y, c)| apply_lens(lens, y, c))
        .collect();
    reduced_binned_error(lens, &samples, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceRegime {
    /// `U` = bins with frequency ≤ confidence; bound `1 - acc_U`.
    Overconfident,
    /// `U` = bins with frequency ≥ confidence; bound `acc_U`.
    Underconfident,
}

/// Binned check of the accuracy bounds on ECE for mostly over- or
/// under-confident classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBoundReport {
    pub regime: ConfidenceRegime,
    /// Weight of the bins forming `U`, i.e. `1 - δ`.
    pub condition_mass: f64,
    pub delta: f64,
    /// Accuracy over the samples in `U`.
    pub acc_u: f64,
    /// Widest bin; accounts for the gap between binned and exact conditioning.
    pub slack: f64,
    pub bound: f64,
    pub ece: f64,
    pub holds: bool,
}

/// Picks the regime whose set `U` carries more weight (overconfident on ties)
/// and compares the ℓ1 binned ECE with `1 - acc_U + δ + slack`
/// (overconfident) or `acc_U + δ + slack` (underconfident).
pub fn accuracy_bound_check(
    dataset: &PredictionDataset,
    config: &BinningConfig,
) -> AccuracyBoundReport {
    let curve = reliability_curve(dataset, config);
    accuracy_bound_from_curve(&curve)
}

pub fn accuracy_bound_from_curve(curve: &ReliabilityCurve) -> AccuracyBoundReport {
    let n = curve.total_count() as f64;
    let filled: Vec<&ReliabilityBin> = curve.bins.iter().filter(|b| b.count > 0).collect();
    let mass = |pred: &dyn Fn(&ReliabilityBin) -> bool| -> (f64, f64) {
        let members: Vec<&&ReliabilityBin> = filled.iter().filter(|b| pred(b)).collect();
        let count: usize = members.iter().map(|b| b.count).sum();
        let hits: f64 = members.iter().map(|b| b.frequency * b.count as f64).sum();
        let acc = if count > 0 { hits / count as f64 } else { 0.0 };
        (count as f64 / n, acc)
    };
    let over = mass(&|b| b.frequency <= b.confidence);
    let under = mass(&|b| b.frequency >= b.confidence);
    let (regime, (condition_mass, acc_u)) = if over.0 >= under.0 {
        (ConfidenceRegime::Overconfident, over)
    } else {
        (ConfidenceRegime::Underconfident, under)
    };
    let delta = 1.0 - condition_mass;
    let slack = curve
        .bins
        .iter()
        .map(|b| b.bin_hi - b.bin_lo)
        .fold(0.0, f64::max);
    let base = match regime {
        ConfidenceRegime::Overconfident => 1.0 - acc_u,
        ConfidenceRegime::Underconfident => acc_u,
    };
    let bound = base + delta + slack;
    let ece = curve.error(PNorm::Finite(1.0));
    AccuracyBoundReport {
        regime,
        condition_mass,
        delta,
        acc_u,
        slack,
        bound,
        ece,
        holds: ece <= bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::ConfidenceVector;

    fn cv(v: &[f64]) -> ConfidenceVector {
        ConfidenceVector::new(v.to_vec()).unwrap()
    }

    /// Top confidences 0.8, 0.7, 0.9, 0.6 with correctness 1, 0, 1, 1.
    fn four_samples() -> PredictionDataset {
        PredictionDataset::new(
            2,
            vec![1, 2, 1, 1],
            vec![
                cv(&[0.8, 0.2]),
                cv(&[0.7, 0.3]),
                cv(&[0.9, 0.1]),
                cv(&[0.6, 0.4]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn ece_single_bin() {
        let ece = binned_ece(&four_samples(), &BinningConfig::new(1));
        assert!(ece.abs() < 1e-15, "{ece}");
    }

    #[test]
    fn ece_two_bins_over_upper_half() {
        let cfg = BinningConfig::new(2).with_range(0.5, 1.0);
        let ece = binned_ece(&four_samples(), &cfg);
        assert!((ece - 0.15).abs() < 1e-12, "{ece}");
        // Four bins over [0, 1] put the split in the same place.
        let ece4 = binned_ece(&four_samples(), &BinningConfig::new(4));
        assert!((ece4 - 0.15).abs() < 1e-12, "{ece4}");
    }

    #[test]
    fn reliability_two_bins() {
        let cfg = BinningConfig::new(2).with_range(0.5, 1.0);
        let curve = reliability_curve(&four_samples(), &cfg);
        let b0 = &curve.bins[0];
        let b1 = &curve.bins[1];
        assert_eq!((b0.count, b1.count), (2, 2));
        assert!((b0.confidence - 0.65).abs() < 1e-12 && b0.frequency == 0.5);
        assert!((b1.confidence - 0.85).abs() < 1e-12 && b1.frequency == 1.0);
        let agg: f64 = curve
            .bins
            .iter()
            .map(|b| b.count as f64 / 4.0 * b.gap)
            .sum();
        assert_eq!(agg, binned_ece(&four_samples(), &cfg));
    }

    #[test]
    fn empty_bins_report_zero() {
        let curve = reliability_curve(&four_samples(), &BinningConfig::new(10));
        assert_eq!(curve.bins[0].count, 0);
        assert_eq!(curve.bins[0].gap, 0.0);
        assert_eq!(curve.total_count(), 4);
    }

    #[test]
    fn sharp_correct_classifier() {
        let ds = PredictionDataset::new(
            3,
            vec![1, 3],
            vec![cv(&[1.0, 0.0, 0.0]), cv(&[0.0, 0.0, 1.0])],
        )
        .unwrap();
        assert_eq!(binned_ece(&ds, &BinningConfig::default()), 0.0);
        assert_eq!(accuracy(&ds), 1.0);
        assert!(nll(&ds) <= 1e-11);
    }

    #[test]
    fn classwise_examples() {
        let (overall, per) = classwise_ece(&four_samples(), &BinningConfig::new(1));
        assert!(
            overall.abs() < 1e-15 && per.iter().all(|v| v.abs() < 1e-15),
            "{per:?}"
        );

        let uniform = PredictionDataset::new(4, vec![1, 2, 3, 4], vec![cv(&[0.25; 4]); 4]).unwrap();
        assert_eq!(classwise_ece(&uniform, &BinningConfig::default()).0, 0.0);

        let onehot =
            PredictionDataset::new(4, vec![1, 2, 3, 4], vec![cv(&[1.0, 0.0, 0.0, 0.0]); 4])
                .unwrap();
        let (overall, per) = classwise_ece(&onehot, &BinningConfig::new(1));
        assert_eq!(per, vec![0.75, 0.25, 0.25, 0.25]);
        assert_eq!(overall, 0.375);
    }

    #[test]
    fn accuracy_and_nll() {
        assert_eq!(accuracy(&four_samples()), 0.75);
        let ds = PredictionDataset::new(4, vec![1, 2], vec![cv(&[0.25; 4]); 2]).unwrap();
        assert!((nll(&ds) - 4f64.ln()).abs() < 1e-15);
        assert!((nll(&ds) - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn debiased_examples() {
        let ds = PredictionDataset::new(2, vec![1, 1, 1], vec![cv(&[1.0, 0.0]); 3]).unwrap();
        assert_eq!(
            debiased_ece(&ds, &BinningConfig::new(1).with_norm(PNorm::Finite(2.0))).unwrap(),
            0.0
        );

        // One bin, n_b = 2, f_b = 0.5, confidence 0.5: gap 0, correction 0.25.
        let ds = PredictionDataset::new(2, vec![1, 2], vec![cv(&[0.5, 0.5]); 2]).unwrap();
        let cfg = BinningConfig::new(1).with_norm(PNorm::Finite(2.0));
        assert_eq!(debiased_ece(&ds, &cfg).unwrap(), 0.0);

        assert!(debiased_ece(&ds, &BinningConfig::new(1)).is_err());
    }

    #[test]
    fn infinity_norm_takes_worst_bin() {
        let cfg = BinningConfig::new(2)
            .with_range(0.5, 1.0)
            .with_norm(PNorm::Infinity);
        let ds = PredictionDataset::new(
            2,
            vec![1, 2, 1, 1, 1],
            vec![
                cv(&[0.8, 0.2]),
                cv(&[0.7, 0.3]),
                cv(&[0.9, 0.1]),
                cv(&[0.6, 0.4]),
                cv(&[0.6, 0.4]),
            ],
        )
        .unwrap();
        let curve = reliability_curve(&ds, &cfg);
        let worst = curve.bins.iter().map(|b| b.gap).fold(0.0, f64::max);
        assert_eq!(binned_ece(&ds, &cfg), worst);
    }

    fn curve_of(bins: &[(f64, f64, usize)]) -> ReliabilityCurve {
        ReliabilityCurve {
            bins: bins
                .iter()
                .enumerate()
                .map(|(i, &(confidence, frequency, count))| ReliabilityBin {
                    bin_lo: i as f64 * 0.1,
                    bin_hi: (i + 1) as f64 * 0.1,
                    count,
                    confidence,
                    frequency,
                    gap: (frequency - confidence).abs(),
                })
                .collect(),
        }
    }

    #[test]
    fn accuracy_bound_overconfident_bins() {
        let r = accuracy_bound_from_curve(&curve_of(&[(0.9, 0.6, 10), (0.8, 0.7, 10)]));
        assert_eq!(r.regime, ConfidenceRegime::Overconfident);
        assert!((r.ece - 0.2).abs() < 1e-12);
        assert!((r.acc_u - 0.65).abs() < 1e-12);
        assert_eq!(r.delta, 0.0);
        assert!((r.bound - (0.35 + r.slack)).abs() < 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn accuracy_bound_calibrated_and_underconfident() {
        let r = accuracy_bound_from_curve(&curve_of(&[(0.6, 0.6, 5), (0.9, 0.9, 5)]));
        assert!(r.ece.abs() < 1e-15 && r.holds);

        let r = accuracy_bound_from_curve(&curve_of(&[(0.6, 0.8, 10), (0.7, 0.9, 10)]));
        assert_eq!(r.regime, ConfidenceRegime::Underconfident);
        assert!((r.ece - 0.2).abs() < 1e-12);
        assert!((r.acc_u - 0.85).abs() < 1e-12);
        assert!(r.ece <= r.acc_u);
        assert!(r.holds);
    }

    #[test]
    fn norm_parsing() {
        assert_eq!("inf".parse::<PNorm>().unwrap(), PNorm::Infinity);
        assert_eq!("2".parse::<PNorm>().unwrap(), PNorm::Finite(2.0));
        assert!("0.5".parse::<PNorm>().is_err());
        assert!("x".parse::<PNorm>().is_err());
    }
}
