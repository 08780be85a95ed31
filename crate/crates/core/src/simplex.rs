//! Simplex points and datasets of labelled predictions, plus the reduced
//! binary problem type.
//!
//! Class labels are 1-based (`1..=K`) everywhere in the public API. Positions
//! inside a [`ConfidenceVector`] are ordinary 0-based slice indices; the
//! conversion happens at the boundary (`label - 1`).

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Allowed deviation of a row sum from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Clipping constant used wherever a logarithm of a probability is taken.
pub const LOG_EPS: f64 = 1e-12;

/// Sum deviation treated as floating-point rounding rather than drift.
const ROUNDING_SLACK: f64 = 1e-12;

/// A point on the (K-1)-simplex: K entries in `[0, 1]` summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ConfidenceVector(Vec<f64>);

impl ConfidenceVector {
    /// Validates `values` without modifying them.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_simplex(&values)?;
        Ok(Self(values))
    }

    /// Validates `values` and divides by their sum, so the stored point sits
    /// on the simplex up to rounding. Sums already within rounding of one
    /// are left alone, which keeps save and load bit-exact.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        check_simplex(&values)?;
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() <= ROUNDING_SLACK {
            return Ok(Self(values));
        }
        Ok(Self(values.into_iter().map(|v| v / sum).collect()))
    }

    /// Wraps values produced by arithmetic that keeps them on the simplex.
    pub(crate) fn from_trusted(values: Vec<f64>) -> Self {
        debug_assert!(
            check_simplex(&values).is_ok(),
            "not a simplex point: {values:?}"
        );
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    /// 0-based position of the largest entry, ties resolved to the lowest
    /// position.
    pub fn argmax(&self) -> usize {
        argmax_index(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }

    /// 0-based positions ordered by decreasing confidence, ties kept in
    /// increasing position order.
    pub fn ranking(&self) -> Vec<usize> {
        ranking(&self.0)
    }
}

impl TryFrom<Vec<f64>> for ConfidenceVector {
    type Error = CalibError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ConfidenceVector> for Vec<f64> {
    fn from(c: ConfidenceVector) -> Self {
        c.0
    }
}

impl AsRef<[f64]> for ConfidenceVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_simplex(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(CalibError::InvalidConfidence(format!(
            "need at least 2 entries, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(CalibError::InvalidConfidence(format!(
            "non-finite entry {v}"
        )));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CalibError::InvalidConfidence(format!(
            "entry {v} outside [0, 1]"
        )));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(CalibError::InvalidConfidence(format!(
            "entries sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

pub(crate) fn argmax_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn ranking(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // Stable sort keeps lower positions first among equal values.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// Predicted class (1-based): the smallest class attaining the maximum entry.
pub fn argmax_tiebreak(c: &ConfidenceVector) -> usize {
    c.argmax() + 1
}

/// Exp-normalizes a logit vector, subtracting the maximum first.
pub fn softmax(logits: &[f64]) -> Result<ConfidenceVector> {
    if logits.len() < 2 {
        return Err(CalibError::InvalidArgument(format!(
            "softmax needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(CalibError::NonFinite(format!("logit {v}")));
    }
    Ok(ConfidenceVector::from_trusted(softmax_unchecked(logits)))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// `ln(max(p, LOG_EPS))`.
pub(crate) fn clipped_ln(p: f64) -> f64 {
    p.max(LOG_EPS).ln()
}

/// Labels paired with confidence vectors (and optionally the logits they
/// came from). Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct PredictionDataset {
    n_classes: usize,
    labels: Vec<usize>,
    confidences: Vec<ConfidenceVector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logits: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
struct RawDataset {
    n_classes: usize,
    labels: Vec<usize>,
    confidences: Option<Vec<Vec<f64>>>,
    logits: Option<Vec<Vec<f64>>>,
}

impl TryFrom<RawDataset> for PredictionDataset {
    type Error = CalibError;

    fn try_from(raw: RawDataset) -> Result<Self> {
        match (raw.confidences, raw.logits) {
            (Some(c), logits) => {
                let confidences = c
                    .into_iter()
                    .enumerate()
                    .map(|(i, row)| {
                        ConfidenceVector::normalized(row).map_err(|e| CalibError::InvalidRow {
                            row: i + 1,
                            message: e.to_string(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let ds = Self::new(raw.n_classes, raw.labels, confidences)?;
                match logits {
                    Some(l) => ds.with_logits(l),
                    None => Ok(ds),
                }
            }
            (None, Some(l)) => Self::from_logits(raw.n_classes, raw.labels, l),
            (None, None) => Err(CalibError::InvalidDataset(
                "neither confidences nor logits given".into(),
            )),
        }
    }
}

impl PredictionDataset {
    pub fn new(
        n_classes: usize,
        labels: Vec<usize>,
        confidences: Vec<ConfidenceVector>,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(CalibError::InvalidDataset(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if labels.is_empty() {
            return Err(CalibError::InvalidDataset("dataset is empty".into()));
        }
        if labels.len() != confidences.len() {
            return Err(CalibError::InvalidDataset(format!(
                "{} labels but {} confidence rows",
                labels.len(),
                confidences.len()
            )));
        }
        for (i, (&y, c)) in labels.iter().zip(&confidences).enumerate() {
            if !(1..=n_classes).contains(&y) {
                return Err(CalibError::InvalidRow {
                    row: i + 1,
                    message: format!("label {y} outside 1..={n_classes}"),
                });
            }
            if c.n_classes() != n_classes {
                return Err(CalibError::InvalidRow {
                    row: i + 1,
                    message: format!("{} confidences, expected {n_classes}", c.n_classes()),
                });
            }
        }
        Ok(Self {
            n_classes,
            labels,
            confidences,
            logits: None,
        })
    }

    /// Builds a dataset whose confidences are the softmax of `logits`.
    pub fn from_logits(
        n_classes: usize,
        labels: Vec<usize>,
        logits: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let confidences = logits
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if l.len() != n_classes {
                    return Err(CalibError::InvalidRow {
                        row: i + 1,
                        message: format!("{} logits, expected {n_classes}", l.len()),
                    });
                }
                softmax(l).map_err(|e| CalibError::InvalidRow {
                    row: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ds = Self::new(n_classes, labels, confidences)?;
        ds.logits = Some(logits);
        Ok(ds)
    }

    /// Attaches logits, checking that their softmax matches the stored
    /// confidences.
    pub fn with_logits(mut self, logits: Vec<Vec<f64>>) -> Result<Self> {
        if logits.len() != self.len() {
            return Err(CalibError::InvalidDataset(format!(
                "{} logit rows for {} samples",
                logits.len(),
                self.len()
            )));
        }
        for (i, (l, c)) in logits.iter().zip(&self.confidences).enumerate() {
            let row_err = |message: String| CalibError::InvalidRow {
                row: i + 1,
                message,
            };
            if l.len() != self.n_classes {
                return Err(row_err(format!(
                    "{} logits, expected {}",
                    l.len(),
                    self.n_classes
                )));
            }
            let s = softmax(l).map_err(|e| row_err(e.to_string()))?;
            let dev = s
                .as_slice()
                .iter()
                .zip(c.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if dev > SIMPLEX_TOLERANCE {
                return Err(row_err(format!(
                    "softmax of logits deviates from confidences by {dev}"
                )));
            }
        }
        self.logits = Some(logits);
        Ok(self)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// 1-based labels.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn confidences(&self) -> &[ConfidenceVector] {
        &self.confidences
    }

    pub fn logits(&self) -> Option<&[Vec<f64>]> {
        self.logits.as_deref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &ConfidenceVector)> + '_ {
        self.labels.iter().copied().zip(&self.confidences)
    }

    /// Number of samples per class, indexed by `label - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y - 1] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order. Panics on out-of-range indices or an
    /// empty selection.
    pub fn subset(&self, indices: &[usize]) -> Self {
        assert!(!indices.is_empty(), "empty subset");
        Self {
            n_classes: self.n_classes,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            confidences: indices
                .iter()
                .map(|&i| self.confidences[i].clone())
                .collect(),
            logits: self
                .logits
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i].clone()).collect()),
        }
    }

    /// Same labels with new confidence rows; logits are dropped.
    pub fn with_confidences(&self, confidences: Vec<ConfidenceVector>) -> Result<Self> {
        Self::new(self.n_classes, self.labels.clone(), confidences)
    }

    /// Same confidences with different labels; used to instrument fitting.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        let mut ds = Self::new(self.n_classes, labels, self.confidences.clone())?;
        ds.logits = self.logits.clone();
        Ok(ds)
    }
}

/// Reduced binary problem: scores in `[0, 1]` with 0/1 outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryPairs {
    scores: Vec<f64>,
    outcomes: Vec<bool>,
}

impl BinaryPairs {
    /// Scores are clipped to `[0, 1]`; NaN scores are rejected.
    pub fn new(scores: Vec<f64>, outcomes: Vec<bool>) -> Result<Self> {
        if scores.len() != outcomes.len() {
            return Err(CalibError::InvalidArgument(format!(
                "{} scores but {} outcomes",
                scores.len(),
                outcomes.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(CalibError::NonFinite("NaN score".into()));
        }
        Ok(Self {
            scores: scores.into_iter().map(|s| s.clamp(0.0, 1.0)).collect(),
            outcomes,
        })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Top-class pairs `(max c, 1{y = argmax c})`.
    pub fn top_class(dataset: &PredictionDataset) -> Self {
        let (scores, outcomes) = dataset
            .iter()
            .map(|(y, c)| (c.max(), c.argmax() + 1 == y))
            .unzip();
        Self { scores, outcomes }
    }

    /// One-vs-rest pairs `(c_k, 1{y = k})` for 1-based `class`.
    pub fn one_vs_rest(dataset: &PredictionDataset, class: usize) -> Self {
        let (scores, outcomes) = dataset
            .iter()
            .map(|(y, c)| (c.as_slice()[class - 1], y == class))
            .unzip();
        Self { scores, outcomes }
    }
}
