//! Beta calibration: logistic regression on `(ln s, -ln(1 - s))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::simplex::{BinaryPairs, LOG_EPS};

const GRAD_TOL: f64 = 1e-8;
const MAX_NEWTON_ITERS: usize = 200;

/// `s ↦ sigmoid(a ln s - b ln(1 - s) + c0)`, monotone for `a, b >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaModel {
    pub a: f64,
    pub b: f64,
    pub c0: f64,
}

impl BetaModel {
    pub fn apply(&self, score: f64) -> f64 {
        apply_beta(self, score)
    }
}

fn features(s: f64) -> (f64, f64) {
    let s = s.clamp(LOG_EPS, 1.0 - LOG_EPS);
    (s.ln(), -(1.0 - s).ln())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn apply_beta(model: &BetaModel, score: f64) -> f64 {
    let (x1, x2) = features(score);
    sigmoid(model.a * x1 + model.b * x2 + model.c0)
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss of `w` on the rows of `x` (last column is the intercept).
fn logistic_loss(x: &DMatrix<f64>, y: &[f64], w: &DVector<f64>) -> f64 {
    let z = x * w;
    z.iter()
        .zip(y)
        .map(|(&z, &y)| softplus(z) - y * z)
        .sum::<f64>()
        / y.len() as f64
}

/// Newton's method with step halving until the gradient norm drops below
/// `GRAD_TOL`. Separable data has no finite optimum; iteration is capped.
fn fit_logistic(x: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let n = y.len() as f64;
    let d = x.ncols();
    let mut w = DVector::zeros(d);
    let mut loss = logistic_loss(x, y, &w);
    for _ in 0..MAX_NEWTON_ITERS {
        let z = x * &w;
        let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
        let resid = DVector::from_iterator(y.len(), p.iter().zip(y).map(|(p, y)| p - y));
        let grad = x.transpose() * resid / n;
        if grad.norm() < GRAD_TOL {
            break;
        }
        let mut weighted = x.clone();
        for (mut row, &p) in weighted.row_iter_mut().zip(&p) {
            row *= p * (1.0 - p);
        }
        let mut hess = x.transpose() * weighted / n;
        for i in 0..d {
            hess[(i, i)] += 1e-12;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match hess.lu().solve(&grad) {
                Some(s) => s,
                None => grad.clone(),
            },
        };
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-10 {
            let cand = &w - &step * t;
            let cand_loss = logistic_loss(x, y, &cand);
            if cand_loss <= loss {
                w = cand;
                loss = cand_loss;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    w
}

/// Fits `(a, b, c0)` by maximum likelihood. A negative slope is clamped to
/// zero and the remaining parameters refitted, until both slopes are
/// nonnegative.
pub fn fit_beta(pairs: &BinaryPairs) -> Result<BetaModel> {
    let n = pairs.len();
    let positives = pairs.outcomes().iter().filter(|&&o| o).count();
    if n < 2 || positives == 0 || positives == n {
        return Err(CalibError::Degenerate(
            "beta calibration needs both outcomes present".into(),
        ));
    }
    let feats: Vec<(f64, f64)> = pairs.scores().iter().map(|&s| features(s)).collect();
    let y: Vec<f64> = pairs
        .outcomes()
        .iter()
        .map(|&o| if o { 1.0 } else { 0.0 })
        .collect();

    // active[0] is `a`, active[1] is `b`.
    let mut active = [true, true];
    loop {
        let cols: Vec<usize> = (0..2).filter(|&j| active[j]).collect();
        let x = DMatrix::from_fn(n, cols.len() + 1, |i, j| match cols.get(j) {
            Some(0) => feats[i].0,
            Some(_) => feats[i].1,
            None => 1.0,
        });
        let w = fit_logistic(&x, &y);
        let mut coef = [0.0, 0.0];
        for (j, &c) in cols.iter().enumerate() {
            coef[c] = w[j];
        }
        let c0 = w[cols.len()];
        let most_negative = cols
            .iter()
            .copied()
            .filter(|&c| coef[c] < 0.0)
            .min_by(|&p, &q| coef[p].total_cmp(&coef[q]));
        match most_negative {
            Some(c) => active[c] = false,
            None => {
                return Ok(BetaModel {
                    a: coef[0],
                    b: coef[1],
                    c0,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_parameters_are_identity() {
        let m = BetaModel {
            a: 1.0,
            b: 1.0,
            c0: 0.0,
        };
        for i in 1..100 {
            let s = i as f64 / 100.0;
            assert!((m.apply(s) - s).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn zero_slopes_are_constant() {
        let m = BetaModel {
            a: 0.0,
            b: 0.0,
            c0: 0.7,
        };
        let want = sigmoid(0.7);
        for s in [0.0, 0.2, 0.9, 1.0] {
            assert_eq!(m.apply(s), want);
        }
    }

    #[test]
    fn single_class_rejected() {
        let p = BinaryPairs::new(vec![0.2, 0.4], vec![true, true]).unwrap();
        assert!(fit_beta(&p).is_err());
    }

    #[test]
    fn decreasing_relation_clamps_slopes() {
        // Outcomes fall with the score; any increasing fit must flatten.
        let scores: Vec<f64> = (1..200).map(|i| i as f64 / 200.0).collect();
        let outcomes: Vec<bool> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| (i % 3 == 0) ^ (s < 0.5))
            .collect();
        let m = fit_beta(&BinaryPairs::new(scores, outcomes).unwrap()).unwrap();
        assert!(m.a >= 0.0 && m.b >= 0.0, "{m:?}");
    }

    #[test]
    fn extreme_scores_are_finite() {
        let p = BinaryPairs::new(vec![0.0, 1.0, 0.5, 0.3], vec![false, true, true, false]).unwrap();
        let m = fit_beta(&p).unwrap();
        assert!(m.apply(0.0).is_finite() && m.apply(1.0).is_finite());
    }
}
