use serde::{Deserialize, Serialize};

use crate::binning::{bin_index, make_edges, BinScheme};
use crate::error::{CalibError, Result};
use crate::simplex::BinaryPairs;

/// Histogram binning: each score maps to the mean training outcome of its bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramModel {
    pub bin_edges: Vec<f64>,
    pub bin_values: Vec<f64>,
    pub n_bins: usize,
}

impl HistogramModel {
    pub fn apply(&self, score: f64) -> f64 {
        apply_histogram(self, score)
    }
}

/// Empty bins keep the identity at their center.
pub fn fit_histogram(
    pairs: &BinaryPairs,
    n_bins: usize,
    scheme: BinScheme,
) -> Result<HistogramModel> {
    if n_bins < 1 {
        return Err(CalibError::InvalidArgument(
            "histogram needs at least 1 bin".into(),
        ));
    }
    if pairs.is_empty() {
        return Err(CalibError::Degenerate("histogram fit on no samples".into()));
    }
    let bin_edges = make_edges(scheme, n_bins, pairs.scores(), 0.0, 1.0);
    let n_bins = bin_edges.len() - 1;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&s, &o) in pairs.scores().iter().zip(pairs.outcomes()) {
        let b = bin_index(&bin_edges, s);
        counts[b] += 1;
        if o {
            sums[b] += 1.0;
        }
    }
    let bin_values = (0..n_bins)
        .map(|b| match counts[b] {
            0 => 0.5 * (bin_edges[b] + bin_edges[b + 1]),
            n => sums[b] / n as f64,
        })
        .collect();
    Ok(HistogramModel {
        bin_edges,
        bin_values,
        n_bins,
    })
}

pub fn apply_histogram(model: &HistogramModel, score: f64) -> f64 {
    model.bin_values[bin_index(&model.bin_edges, score)].clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(s: &[f64], o: &[u8]) -> BinaryPairs {
        BinaryPairs::new(s.to_vec(), o.iter().map(|&x| x == 1).collect()).unwrap()
    }

    #[test]
    fn two_bin_example() {
        let p = pairs(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 1]);
        let m = fit_histogram(&p, 2, BinScheme::EqualWidth).unwrap();
        assert_eq!(m.bin_values, vec![0.5, 1.0]);
        assert_eq!(m.apply(0.25), 0.5);
        assert_eq!(m.apply(0.85), 1.0);
    }

    #[test]
    fn constant_positive_outcomes() {
        let p = pairs(&[0.1, 0.15, 0.6, 0.62, 0.95], &[1, 1, 1, 1, 1]);
        let m = fit_histogram(&p, 10, BinScheme::EqualWidth).unwrap();
        for s in [0.1, 0.15, 0.6, 0.62, 0.95] {
            assert_eq!(m.apply(s), 1.0);
        }
    }

    #[test]
    fn empty_bin_is_identity_at_center() {
        let p = pairs(&[0.1, 0.2], &[0, 1]);
        let m = fit_histogram(&p, 2, BinScheme::EqualWidth).unwrap();
        assert_eq!(m.apply(0.75), 0.75);
    }

    #[test]
    fn zero_bins_rejected() {
        assert!(fit_histogram(&pairs(&[0.5], &[1]), 0, BinScheme::EqualWidth).is_err());
    }

    #[test]
    fn equal_mass_bins() {
        let p = pairs(&[0.1, 0.2, 0.3, 0.4], &[0, 0, 1, 1]);
        let m = fit_histogram(&p, 2, BinScheme::EqualMass).unwrap();
        assert_eq!(m.bin_edges, vec![0.0, 0.3, 1.0]);
        assert_eq!(m.bin_values, vec![0.0, 1.0]);
    }
}
