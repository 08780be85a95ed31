//! Calibration lenses and their lifts.
//!
//! A lens maps a labelled prediction `(y, c)` to a smaller problem
//! `(ỹ, c̃)`. A lift turns a recalibration map `r̃` of the smaller problem back
//! into a map on the full simplex. On the lens's condition set the diagram
//! commutes: reducing the lifted output gives exactly `r̃(c̃)`.
//!
//! Rankings use a stable descending sort, so ties go to the lower class
//! index in both the lens and the lift.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::simplex::{ConfidenceVector, PredictionDataset};

/// Residual slack allowed when a top-k map's outputs sum past 1.
const TOPK_SUM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LensKind {
    /// `(1{y = argmax c}, max c)`.
    Confidence,
    /// Rank position of `y` among the top k (0 if outside), and the top-k
    /// confidences in rank order.
    TopK(usize),
    /// `(1{y in top k}, sum of the top k confidences)`.
    SumK(usize),
    /// Confidence lens that also reports the predicted class.
    TopLabel,
}

impl LensKind {
    /// Checks `1 <= k < n_classes` for the ranked lenses.
    pub fn validate(self, n_classes: usize) -> Result<()> {
        match self {
            LensKind::TopK(k) | LensKind::SumK(k) if k == 0 || k >= n_classes => Err(
                CalibError::InvalidArgument(format!("lens {self} needs 1 <= k < {n_classes}")),
            ),
            _ => Ok(()),
        }
    }

    /// Length of the reduced confidence vector.
    pub fn reduced_dim(self) -> usize {
        match self {
            LensKind::TopK(k) => k,
            _ => 1,
        }
    }
}

impl fmt::Display for LensKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LensKind::Confidence => f.write_str("confidence"),
            LensKind::TopK(k) => write!(f, "topk:{k}"),
            LensKind::SumK(k) => write!(f, "sumk:{k}"),
            LensKind::TopLabel => f.write_str("toplabel"),
        }
    }
}

impl FromStr for LensKind {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || CalibError::UnknownName {
            kind: "lens",
            value: s.into(),
            expected: "confidence, topk:<k>, sumk:<k>, toplabel",
        };
        match s {
            "confidence" => return Ok(LensKind::Confidence),
            "toplabel" => return Ok(LensKind::TopLabel),
            _ => {}
        }
        let (name, k) = s.split_once(':').ok_or_else(unknown)?;
        let k: usize = k.parse().map_err(|_| unknown())?;
        if k == 0 {
            return Err(unknown());
        }
        match name {
            "topk" => Ok(LensKind::TopK(k)),
            "sumk" => Ok(LensKind::SumK(k)),
            _ => Err(unknown()),
        }
    }
}

impl TryFrom<String> for LensKind {
    type Error = CalibError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LensKind> for String {
    fn from(l: LensKind) -> Self {
        l.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSample {
    pub reduced_label: usize,
    pub reduced_confidence: Vec<f64>,
    /// Predicted class (1-based), only for [`LensKind::TopLabel`].
    pub aux_class: Option<usize>,
}

/// The confidence half of a lens, `ϕ_c(c)`.
pub fn reduce_confidence(lens: LensKind, c: &ConfidenceVector) -> (Vec<f64>, Option<usize>) {
    let v = c.as_slice();
    match lens {
        LensKind::Confidence => (vec![c.max()], None),
        LensKind::TopLabel => (vec![c.max()], Some(c.argmax() + 1)),
        LensKind::TopK(k) => (c.ranking()[..k].iter().map(|&i| v[i]).collect(), None),
        LensKind::SumK(k) => (vec![c.ranking()[..k].iter().map(|&i| v[i]).sum()], None),
    }
}

/// Applies a lens to one labelled prediction. `y` is 1-based.
///
/// Panics if `k >= K` for the ranked lenses; see [`LensKind::validate`].
pub fn apply_lens(lens: LensKind, y: usize, c: &ConfidenceVector) -> ReducedSample {
    let (reduced_confidence, aux_class) = reduce_confidence(lens, c);
    let target = y - 1;
    let reduced_label = match lens {
        LensKind::Confidence | LensKind::TopLabel => usize::from(c.argmax() == target),
        LensKind::TopK(k) => c.ranking()[..k]
            .iter()
            .position(|&i| i == target)
            .map_or(0, |j| j + 1),
        LensKind::SumK(k) => usize::from(c.ranking()[..k].contains(&target)),
    };
    ReducedSample {
        reduced_label,
        reduced_confidence,
        aux_class,
    }
}

fn check_unit(r: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&r) {
        Ok(r)
    } else {
        Err(CalibError::InvalidArgument(format!(
            "reduced recalibration returned {r}, outside [0, 1]"
        )))
    }
}

/// Puts `r̃(max c)` on the predicted class and spreads the rest uniformly.
pub fn lift_confidence<F: Fn(f64) -> f64>(rt: F, c: &ConfidenceVector) -> Result<ConfidenceVector> {
    let a = c.argmax();
    let r = check_unit(rt(c.as_slice()[a]))?;
    Ok(spread_uniform(c.n_classes(), a, r))
}

fn spread_uniform(k: usize, top: usize, r: f64) -> ConfidenceVector {
    let rest = (1.0 - r) / (k - 1) as f64;
    let mut out = vec![rest; k];
    out[top] = r;
    ConfidenceVector::from_trusted(out)
}

/// Like [`lift_confidence`] but the remaining mass keeps the proportions of
/// the original non-top entries. Falls back to the uniform split when those
/// entries are all zero.
pub fn lift_weighted<F: Fn(f64) -> f64>(rt: F, c: &ConfidenceVector) -> Result<ConfidenceVector> {
    let v = c.as_slice();
    let a = c.argmax();
    let r = check_unit(rt(v[a]))?;
    let rest: f64 = v
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != a)
        .map(|(_, x)| x)
        .sum();
    if rest <= 0.0 {
        return Ok(spread_uniform(v.len(), a, r));
    }
    let out = v
        .iter()
        .enumerate()
        .map(|(i, &x)| if i == a { r } else { x / rest * (1.0 - r) })
        .collect();
    Ok(ConfidenceVector::from_trusted(out))
}

/// Places `r̃_j(ord_{:k}(c))` on the j-th ranked class and splits the
/// remaining mass uniformly over the other `K - k` classes.
///
/// `rt` receives the raw top-k confidences (which need not sum to 1) and
/// must return k nonnegative values summing to at most 1.
pub fn lift_topk<F: Fn(&[f64]) -> Vec<f64>>(
    k: usize,
    rt: F,
    c: &ConfidenceVector,
) -> Result<ConfidenceVector> {
    LensKind::TopK(k).validate(c.n_classes())?;
    let v = c.as_slice();
    let order = c.ranking();
    let top: Vec<f64> = order[..k].iter().map(|&i| v[i]).collect();
    let r = rt(&top);
    if r.len() != k {
        return Err(CalibError::InvalidArgument(format!(
            "top-{k} recalibration returned {} values",
            r.len()
        )));
    }
    for &x in &r {
        check_unit(x)?;
    }
    let total: f64 = r.iter().sum();
    if total > 1.0 + TOPK_SUM_SLACK {
        return Err(CalibError::InvalidArgument(format!(
            "top-{k} recalibration outputs sum to {total} > 1"
        )));
    }
    let rest = ((1.0 - total) / (v.len() - k) as f64).max(0.0);
    let mut out = vec![rest; v.len()];
    for (&i, &x) in order[..k].iter().zip(&r) {
        out[i] = x;
    }
    Ok(ConfidenceVector::from_trusted(out))
}

/// Gives each of the k top-ranked classes `r̃(s)/k`, where `s` is their total
/// confidence, and each other class `(1 - r̃(s))/(K - k)`.
pub fn lift_sumk<F: Fn(f64) -> f64>(
    k: usize,
    rt: F,
    c: &ConfidenceVector,
) -> Result<ConfidenceVector> {
    LensKind::SumK(k).validate(c.n_classes())?;
    let v = c.as_slice();
    let order = c.ranking();
    let s: f64 = order[..k].iter().map(|&i| v[i]).sum();
    let r = check_unit(rt(s))?;
    let mut out = vec![(1.0 - r) / (v.len() - k) as f64; v.len()];
    for &i in &order[..k] {
        out[i] = r / k as f64;
    }
    Ok(ConfidenceVector::from_trusted(out))
}

/// Confidence lift where `r̃` may depend on the predicted class (1-based).
pub fn lift_toplabel<F: Fn(f64, usize) -> f64>(
    rt: F,
    c: &ConfidenceVector,
) -> Result<ConfidenceVector> {
    let a = c.argmax();
    let r = check_unit(rt(c.as_slice()[a], a + 1))?;
    Ok(spread_uniform(c.n_classes(), a, r))
}

/// A lens together with the lift used to undo it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiftKind {
    Confidence,
    Weighted,
    TopK(usize),
    SumK(usize),
    TopLabel,
}

impl LiftKind {
    /// The weighted lift only exists for the confidence lens.
    pub fn new(lens: LensKind, weighted: bool) -> Result<Self> {
        match (lens, weighted) {
            (LensKind::Confidence, true) => Ok(LiftKind::Weighted),
            (_, true) => Err(CalibError::InvalidArgument(format!(
                "weighted lift requires the confidence lens, got {lens}"
            ))),
            (LensKind::Confidence, false) => Ok(LiftKind::Confidence),
            (LensKind::TopK(k), false) => Ok(LiftKind::TopK(k)),
            (LensKind::SumK(k), false) => Ok(LiftKind::SumK(k)),
            (LensKind::TopLabel, false) => Ok(LiftKind::TopLabel),
        }
    }

    pub fn lens(self) -> LensKind {
        match self {
            LiftKind::Confidence | LiftKind::Weighted => LensKind::Confidence,
            LiftKind::TopK(k) => LensKind::TopK(k),
            LiftKind::SumK(k) => LensKind::SumK(k),
            LiftKind::TopLabel => LensKind::TopLabel,
        }
    }
}

/// A recalibration map on reduced confidences. Scalar lenses pass and return
/// one value; top-k passes and returns k. `aux_class` is the 1-based
/// predicted class for the top-label lens.
pub trait ReducedMap {
    fn recalibrate(&self, reduced: &[f64], aux_class: Option<usize>) -> Vec<f64>;
}

impl<F: Fn(&[f64], Option<usize>) -> Vec<f64>> ReducedMap for F {
    fn recalibrate(&self, reduced: &[f64], aux_class: Option<usize>) -> Vec<f64> {
        self(reduced, aux_class)
    }
}

fn scalar(rt: &(impl ReducedMap + ?Sized), x: f64, aux: Option<usize>) -> f64 {
    rt.recalibrate(&[x], aux)[0]
}

/// Lifts `rt` through the given lens and applies the result to `c`.
pub fn lift(
    kind: LiftKind,
    rt: &(impl ReducedMap + ?Sized),
    c: &ConfidenceVector,
) -> Result<ConfidenceVector> {
    match kind {
        LiftKind::Confidence => lift_confidence(|x| scalar(rt, x, None), c),
        LiftKind::Weighted => lift_weighted(|x| scalar(rt, x, None), c),
        LiftKind::TopK(k) => lift_topk(k, |top| rt.recalibrate(top, None), c),
        LiftKind::SumK(k) => lift_sumk(k, |x| scalar(rt, x, None), c),
        LiftKind::TopLabel => lift_toplabel(|x, a| scalar(rt, x, Some(a)), c),
    }
}

/// Whether `c` lies in the lift's condition set, given the reduced map's
/// output `r` at `ϕ_c(c)`.
pub fn in_condition_set(kind: LiftKind, r: &[f64], c: &ConfidenceVector) -> bool {
    let n = c.n_classes() as f64;
    match kind {
        LiftKind::Confidence | LiftKind::TopLabel => r[0] >= 1.0 / n,
        LiftKind::TopK(_) => r.iter().all(|&x| x >= 1.0 / n),
        LiftKind::SumK(k) => r[0] >= k as f64 / n,
        LiftKind::Weighted => {
            let v = c.as_slice();
            let a = c.argmax();
            let rest: f64 = v
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != a)
                .map(|(_, x)| x)
                .sum();
            if rest <= 0.0 {
                return r[0] >= 1.0 / n;
            }
            v.iter()
                .enumerate()
                .filter(|&(i, _)| i != a)
                .all(|(_, &ci)| r[0] >= ci / (ci + rest))
        }
    }
}

/// Empirical mass of the lift's condition set over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    /// Empirical `P(Ũ)`, i.e. `1 - δ`.
    pub condition_mass: f64,
    /// 0-based sample indices outside the condition set.
    pub violating_indices: Vec<usize>,
}

impl LiftReport {
    pub fn from_violations(n: usize, violating_indices: Vec<usize>) -> Self {
        Self {
            condition_mass: 1.0 - violating_indices.len() as f64 / n as f64,
            violating_indices,
        }
    }
}

pub fn condition_mass(
    kind: LiftKind,
    rt: &(impl ReducedMap + ?Sized),
    dataset: &PredictionDataset,
) -> LiftReport {
    let lens = kind.lens();
    let violating = dataset
        .confidences()
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let (reduced, aux) = reduce_confidence(lens, c);
            !in_condition_set(kind, &rt.recalibrate(&reduced, aux), c)
        })
        .map(|(i, _)| i)
        .collect();
    LiftReport::from_violations(dataset.len(), violating)
}
