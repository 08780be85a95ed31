//! Fitted models checked against brute-force references computed here from
//! first principles.

use calibkit::calibrators::{fit_beta, fit_isotonic, fit_temperature, pava, BetaModel};
use calibkit::datagen::{etf_top_confidence, gen_dirichlet, gen_etf, DirichletSpec, EtfSpec};
use calibkit::metrics::{accuracy, binned_ece, BinningConfig};
use calibkit::{BinaryPairs, PredictionDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean NLL of `softmax(ln c / t)` at the labels, written out longhand.
fn temperature_nll(ds: &PredictionDataset, t: f64) -> f64 {
    let mut total = 0.0;
    for (y, c) in ds.iter() {
        let z: Vec<f64> = c
            .as_slice()
            .iter()
            .map(|&p| p.max(1e-12).ln() / t)
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[y - 1];
    }
    total / ds.len() as f64
}

/// 1000 log-spaced temperatures on [0.01, 100].
fn temperature_grid_argmin(ds: &PredictionDataset) -> (f64, f64) {
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 0..1000 {
        let t = 10f64.powf(-2.0 + 4.0 * i as f64 / 999.0);
        let v = temperature_nll(ds, t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

#[test]
fn temperature_matches_grid_search() {
    for (s, seed) in [(0.5, 1), (1.0, 2), (2.0, 3), (4.0, 4)] {
        let ds = gen_dirichlet(&DirichletSpec::symmetric(10_000, 4, 1.0, 1.0 / s, seed)).unwrap();
        let fitted = fit_temperature(&ds, false).unwrap().temperature;
        let (grid_t, grid_nll) = temperature_grid_argmin(&ds);
        let step = 4.0 * 10f64.ln() / 999.0;
        assert!(
            (fitted.ln() - grid_t.ln()).abs() <= step,
            "s={s}: fitted {fitted}, grid {grid_t}"
        );
        assert!(temperature_nll(&ds, fitted) <= grid_nll + 1e-12, "s={s}");
        assert!((fitted / s - 1.0).abs() < 0.05, "s={s}: fitted {fitted}");
    }
}

fn beta_nll(s: &[f64], o: &[bool], a: f64, b: f64, c0: f64) -> f64 {
    let m = BetaModel { a, b, c0 };
    s.iter()
        .zip(o)
        .map(|(&x, &y)| {
            let p = m.apply(x).clamp(1e-15, 1.0 - 1e-15);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / s.len() as f64
}

#[test]
fn beta_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 20_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..0.999)).collect();
    let outcomes: Vec<bool> = scores
        .iter()
        .map(|&s| rng.random::<f64>() < s * s / (s * s + (1.0 - s) * (1.0 - s)))
        .collect();
    let m = fit_beta(&BinaryPairs::new(scores.clone(), outcomes.clone()).unwrap()).unwrap();
    assert!(
        (m.a / 2.0 - 1.0).abs() < 0.1 && (m.b / 2.0 - 1.0).abs() < 0.1,
        "{m:?}"
    );
    assert!(m.c0.abs() < 0.1, "{m:?}");

    let mut best = (0.0, 0.0, 0.0, f64::INFINITY);
    for i in 0..=20 {
        for j in 0..=20 {
            for l in 0..=20 {
                let (a, b, c0) = (
                    1.5 + 0.05 * i as f64,
                    1.5 + 0.05 * j as f64,
                    -0.5 + 0.05 * l as f64,
                );
                let v = beta_nll(&scores, &outcomes, a, b, c0);
                if v < best.3 {
                    best = (a, b, c0, v);
                }
            }
        }
    }
    assert!(beta_nll(&scores, &outcomes, m.a, m.b, m.c0) <= best.3 + 1e-12);
    assert!(
        (m.a - best.0).abs() <= 0.05
            && (m.b - best.1).abs() <= 0.05
            && (m.c0 - best.2).abs() <= 0.05
    );
}

/// Minimum weighted squared error over all partitions of `0..n` into
/// contiguous blocks whose weighted means are nondecreasing.
pub fn exhaustive_isotonic_sse(y: &[f64], w: &[f64]) -> f64 {
    let n = y.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (n - 1)) {
        let mut start = 0;
        let mut prev_mean = f64::NEG_INFINITY;
        let mut sse = 0.0;
        let mut feasible = true;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let wsum: f64 = w[start..end].iter().sum();
                let mean = (start..end).map(|i| w[i] * y[i]).sum::<f64>() / wsum;
                if mean < prev_mean - 1e-12 {
                    feasible = false;
                    break;
                }
                sse += (start..end)
                    .map(|i| w[i] * (y[i] - mean).powi(2))
                    .sum::<f64>();
                prev_mean = mean;
                start = end;
            }
        }
        if feasible {
            best = best.min(sse);
        }
    }
    best
}

#[test]
fn pava_matches_exhaustive_partitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let y: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    rng.random_range(0..2) as f64
                } else {
                    rng.random()
                }
            })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let fit = pava(&y, &w);
        assert!(fit.windows(2).all(|p| p[0] <= p[1] + 1e-15), "{fit:?}");
        let sse: f64 = (0..n).map(|i| w[i] * (y[i] - fit[i]).powi(2)).sum();
        let oracle = exhaustive_isotonic_sse(&y, &w);
        assert!(
            (sse - oracle).abs() < 1e-9,
            "{y:?} {w:?}: {sse} vs {oracle}"
        );
    }
}

#[test]
fn isotonic_fit_equals_pava_on_distinct_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let scores: Vec<f64> = (0..n)
            .map(|i| (i as f64 + rng.random::<f64>() * 0.5) / n as f64)
            .collect();
        let outcomes: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let ys: Vec<f64> = outcomes
            .iter()
            .map(|&o| if o { 1.0 } else { 0.0 })
            .collect();
        let want = pava(&ys, &vec![1.0; n]);
        let m = fit_isotonic(&BinaryPairs::new(scores.clone(), outcomes).unwrap()).unwrap();
        for (s, w) in scores.iter().zip(&want) {
            assert_eq!(m.apply(*s), *w);
        }
    }
}

#[test]
fn etf_single_bin_ece_matches_closed_form() {
    for (rho, k) in [(0.5, 3), (1.0, 5), (2.5, 4), (4.0, 10)] {
        let ds = gen_etf(&EtfSpec::balanced(5000, k, rho, 0.0, 7)).unwrap();
        let sigma = (rho * k as f64 / (k - 1) as f64).exp();
        let sigma = sigma / (sigma + (k - 1) as f64);
        assert!((etf_top_confidence(rho, k) - sigma).abs() < 1e-15);
        assert_eq!(accuracy(&ds), 1.0);
        let ece = binned_ece(&ds, &BinningConfig::new(1));
        assert!(
            (ece - (sigma - 1.0).abs()).abs() < 1e-9,
            "rho={rho} k={k}: {ece} vs {}",
            1.0 - sigma
        );
    }
}

#[test]
fn etf_overconfidence_grows_with_radius() {
    use calibkit::metrics::classwise_ece;
    // Class 1 radius doubles; its class-wise error must not shrink.
    let base = EtfSpec {
        n: 50_000,
        k: 4,
        class_weights: vec![0.25; 4],
        radii: vec![3.0, 1.0, 1.0, 1.0],
        noise_sigma: 1.5,
        seed: 21,
    };
    let doubled = EtfSpec {
        radii: vec![6.0, 1.0, 1.0, 1.0],
        ..base.clone()
    };
    let cfg = BinningConfig::new(25);
    let (_, a) = classwise_ece(&gen_etf(&base).unwrap(), &cfg);
    let (_, b) = classwise_ece(&gen_etf(&doubled).unwrap(), &cfg);
    assert!(b[0] >= a[0], "{} -> {}", a[0], b[0]);
}
