use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::simplex::BinaryPairs;

/// Non-decreasing step function: `block_values[i]` holds on
/// `[breakpoints[i], breakpoints[i + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicModel {
    pub breakpoints: Vec<f64>,
    pub block_values: Vec<f64>,
}

impl IsotonicModel {
    pub fn apply(&self, score: f64) -> f64 {
        apply_isotonic(self, score)
    }
}

/// Pool-adjacent-violators: the non-decreasing sequence minimizing
/// `Σ w_i (f_i - y_i)²`. Returns one fitted value per input.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // (weighted mean, total weight, number of points)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&y, &w) in values.iter().zip(weights) {
        let mut cur = (y, w, 1usize);
        while let Some(&(mean, weight, len)) = blocks.last() {
            if mean < cur.0 {
                break;
            }
            blocks.pop();
            let total = weight + cur.1;
            cur = ((mean * weight + cur.0 * cur.1) / total, total, len + cur.2);
        }
        blocks.push(cur);
    }
    blocks
        .into_iter()
        .flat_map(|(mean, _, len)| std::iter::repeat_n(mean, len))
        .collect()
}

/// Samples sharing a score are merged into one weighted point first, so the
/// fit does not depend on input order.
pub fn fit_isotonic(pairs: &BinaryPairs) -> Result<IsotonicModel> {
    if pairs.is_empty() {
        return Err(CalibError::Degenerate("isotonic fit on no samples".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs.scores()[a].total_cmp(&pairs.scores()[b]));

    let mut xs: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for i in order {
        let s = pairs.scores()[i];
        let y = if pairs.outcomes()[i] { 1.0 } else { 0.0 };
        if xs.last() == Some(&s) {
            *sums.last_mut().unwrap() += y;
            *weights.last_mut().unwrap() += 1.0;
        } else {
            xs.push(s);
            sums.push(y);
            weights.push(1.0);
        }
    }
    let means: Vec<f64> = sums.iter().zip(&weights).map(|(s, w)| s / w).collect();
    let fitted = pava(&means, &weights);

    let mut breakpoints = Vec::new();
    let mut block_values: Vec<f64> = Vec::new();
    for (&x, &f) in xs.iter().zip(&fitted) {
        if block_values.last() != Some(&f) {
            breakpoints.push(x);
            block_values.push(f);
        }
    }
    Ok(IsotonicModel {
        breakpoints,
        block_values,
    })
}

/// Right-continuous step lookup; scores below the first breakpoint take the
/// first block's value.
pub fn apply_isotonic(model: &IsotonicModel, score: f64) -> f64 {
    let idx = model.breakpoints.partition_point(|&b| b <= score);
    model.block_values[idx.saturating_sub(1)].clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(s: &[f64], o: &[u8]) -> IsotonicModel {
        let p = BinaryPairs::new(s.to_vec(), o.iter().map(|&x| x == 1).collect()).unwrap();
        fit_isotonic(&p).unwrap()
    }

    #[test]
    fn pools_middle_violation() {
        assert_eq!(
            pava(&[0.0, 1.0, 0.0, 1.0], &[1.0; 4]),
            vec![0.0, 0.5, 0.5, 1.0]
        );
        let m = fit(&[0.1, 0.2, 0.3, 0.4], &[0, 1, 0, 1]);
        let got: Vec<f64> = [0.1, 0.2, 0.3, 0.4].iter().map(|&s| m.apply(s)).collect();
        assert_eq!(got, vec![0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn monotone_outcomes_unchanged() {
        let m = fit(&[0.1, 0.2, 0.3, 0.4], &[0, 0, 1, 1]);
        let got: Vec<f64> = [0.1, 0.2, 0.3, 0.4].iter().map(|&s| m.apply(s)).collect();
        assert_eq!(got, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn constant_zero_outcomes() {
        let m = fit(&[0.3, 0.1, 0.9], &[0, 0, 0]);
        assert_eq!(m.block_values, vec![0.0]);
        assert_eq!(m.apply(0.5), 0.0);
    }

    #[test]
    fn step_lookup_edges() {
        let m = fit(&[0.2, 0.4, 0.6], &[0, 1, 1]);
        assert_eq!(m.apply(0.0), 0.0);
        assert_eq!(m.apply(0.39), 0.0);
        assert_eq!(m.apply(0.4), 1.0);
        assert_eq!(m.apply(1.0), 1.0);
    }

    #[test]
    fn tied_scores_are_order_independent() {
        let a = fit(&[0.5, 0.5, 0.2, 0.5], &[1, 0, 0, 1]);
        let b = fit(&[0.5, 0.2, 0.5, 0.5], &[0, 0, 1, 1]);
        assert_eq!(a, b);
        assert!((a.apply(0.5) - 2.0 / 3.0).abs() < 1e-15);
    }
}
