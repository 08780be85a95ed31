//! Bin edges and bin lookup shared by histogram recalibration and the binned
//! error estimators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinScheme {
    #[default]
    EqualWidth,
    EqualMass,
}

impl fmt::Display for BinScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinScheme::EqualWidth => "equal-width",
            BinScheme::EqualMass => "equal-mass",
        })
    }
}

impl FromStr for BinScheme {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal-width" => Ok(BinScheme::EqualWidth),
            "equal-mass" => Ok(BinScheme::EqualMass),
            _ => Err(CalibError::UnknownName {
                kind: "binning scheme",
                value: s.into(),
                expected: "equal-width, equal-mass",
            }),
        }
    }
}

pub fn equal_width_edges(n_bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=n_bins)
        .map(|i| lo + (hi - lo) * i as f64 / n_bins as f64)
        .collect();
    edges[n_bins] = hi;
    edges
}

/// Edges at empirical quantiles of `scores`, clamped into `[lo, hi]`.
/// Duplicate quantiles collapse, so fewer than `n_bins` bins may result.
pub fn equal_mass_edges(scores: &[f64], n_bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.iter().map(|s| s.clamp(lo, hi)).collect();
    sorted.sort_by(f64::total_cmp);
    let mut edges = vec![lo];
    if !sorted.is_empty() {
        for i in 1..n_bins {
            let q = sorted[i * sorted.len() / n_bins];
            if q > *edges.last().unwrap() && q < hi {
                edges.push(q);
            }
        }
    }
    edges.push(hi);
    edges
}

pub fn make_edges(scheme: BinScheme, n_bins: usize, scores: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    match scheme {
        BinScheme::EqualWidth => equal_width_edges(n_bins, lo, hi),
        BinScheme::EqualMass => equal_mass_edges(scores, n_bins, lo, hi),
    }
}

/// Index of the half-open bin `[e_i, e_{i+1})` holding `x`; the last bin is
/// closed and out-of-range values go to the nearest end bin.
pub fn bin_index(edges: &[f64], x: f64) -> usize {
    let n_bins = edges.len() - 1;
    let interior = &edges[1..n_bins];
    interior.partition_point(|&e| e <= x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_width_lookup() {
        let e = equal_width_edges(4, 0.0, 1.0);
        assert_eq!(e, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(bin_index(&e, 0.0), 0);
        assert_eq!(bin_index(&e, 0.25), 1);
        assert_eq!(bin_index(&e, 0.74), 2);
        assert_eq!(bin_index(&e, 1.0), 3);
        assert_eq!(bin_index(&e, -1.0), 0);
        assert_eq!(bin_index(&e, 2.0), 3);
        assert_eq!(bin_index(&[0.0, 1.0], 0.7), 0);
    }

    #[test]
    fn equal_mass_splits_counts() {
        let scores: Vec<f64> = (0..100).map(|i| (i as f64 / 100.0).powi(3)).collect();
        let e = equal_mass_edges(&scores, 4, 0.0, 1.0);
        assert_eq!(e.len(), 5);
        let mut counts = [0; 4];
        for &s in &scores {
            counts[bin_index(&e, s)] += 1;
        }
        assert_eq!(counts, [25, 25, 25, 25]);
    }

    #[test]
    fn equal_mass_collapses_duplicates() {
        let e = equal_mass_edges(&[0.5; 10], 5, 0.0, 1.0);
        assert_eq!(e, vec![0.0, 0.5, 1.0]);
    }
}
