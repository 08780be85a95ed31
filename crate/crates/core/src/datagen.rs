//! Seeded synthetic datasets.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)` and then
//! switched to `stream`, so `(seed, stream)` names an independent and
//! reproducible sequence. The plain generators use stream 0.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::simplex::{softmax_unchecked, ConfidenceVector, PredictionDataset};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `p ~ Dirichlet(alpha)`, `y ~ Cat(p)`, `c = softmax(ln p / sharpen_t)`.
/// `sharpen_t = 1` yields a strongly calibrated classifier; smaller values
/// make it overconfident, larger ones underconfident.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletSpec {
    pub n: usize,
    pub k: usize,
    pub alpha: Vec<f64>,
    pub sharpen_t: f64,
    pub seed: u64,
}

/// Labels drawn from `class_weights`; logits follow the simplex ETF of radius
/// `radii[y]` around the label, plus isotropic Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtfSpec {
    pub n: usize,
    pub k: usize,
    pub class_weights: Vec<f64>,
    pub radii: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// A generator spec as read from JSON, tagged by `generator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase")]
pub enum GeneratorSpec {
    Dirichlet(DirichletSpec),
    Etf(EtfSpec),
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<PredictionDataset> {
        match self {
            GeneratorSpec::Dirichlet(s) => gen_dirichlet(s),
            GeneratorSpec::Etf(s) => gen_etf(s),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            GeneratorSpec::Dirichlet(s) => s.seed,
            GeneratorSpec::Etf(s) => s.seed,
        }
    }
}

fn invalid(msg: String) -> CalibError {
    CalibError::InvalidArgument(msg)
}

fn check_shape(n: usize, k: usize) -> Result<()> {
    if n < 1 {
        return Err(invalid("generator needs n >= 1".into()));
    }
    if k < 2 {
        return Err(invalid(format!("generator needs k >= 2, got {k}")));
    }
    Ok(())
}

fn check_len(name: &str, v: &[f64], k: usize) -> Result<()> {
    if v.len() != k {
        return Err(invalid(format!(
            "{name} has {} entries, expected k = {k}",
            v.len()
        )));
    }
    Ok(())
}

impl DirichletSpec {
    /// Symmetric concentration `alpha` for every class.
    pub fn symmetric(n: usize, k: usize, alpha: f64, sharpen_t: f64, seed: u64) -> Self {
        Self {
            n,
            k,
            alpha: vec![alpha; k],
            sharpen_t,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_shape(self.n, self.k)?;
        check_len("alpha", &self.alpha, self.k)?;
        if let Some(a) = self.alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(invalid(format!("alpha entries must be positive, got {a}")));
        }
        if !(self.sharpen_t.is_finite() && self.sharpen_t > 0.0) {
            return Err(invalid(format!(
                "sharpen_t must be positive, got {}",
                self.sharpen_t
            )));
        }
        Ok(())
    }
}

impl EtfSpec {
    /// Uniform class weights and a single radius.
    pub fn balanced(n: usize, k: usize, radius: f64, noise_sigma: f64, seed: u64) -> Self {
        Self {
            n,
            k,
            class_weights: vec![1.0 / k as f64; k],
            radii: vec![radius; k],
            noise_sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_shape(self.n, self.k)?;
        check_len("class_weights", &self.class_weights, self.k)?;
        check_len("radii", &self.radii, self.k)?;
        if self
            .class_weights
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(invalid("class weights must be nonnegative".into()));
        }
        let total: f64 = self.class_weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(invalid(format!("class weights sum to {total}, expected 1")));
        }
        if let Some(r) = self.radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(invalid(format!("radii must be positive, got {r}")));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(invalid(format!(
                "noise sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

pub fn gen_dirichlet(spec: &DirichletSpec) -> Result<PredictionDataset> {
    gen_dirichlet_stream(spec, 0)
}

pub fn gen_dirichlet_stream(spec: &DirichletSpec, stream: u64) -> Result<PredictionDataset> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, stream);
    let gammas = spec
        .alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).map_err(|e| invalid(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut labels = Vec::with_capacity(spec.n);
    let mut confidences = Vec::with_capacity(spec.n);
    while labels.len() < spec.n {
        let g: Vec<f64> = gammas.iter().map(|d| d.sample(&mut rng)).collect();
        let total: f64 = g.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            // Every gamma draw underflowed; redraw.
            continue;
        }
        let p = ConfidenceVector::normalized(g.into_iter().map(|x| x / total).collect())?;
        let y = WeightedIndex::new(p.as_slice())
            .map_err(|e| invalid(e.to_string()))?
            .sample(&mut rng)
            + 1;
        let c = if spec.sharpen_t == 1.0 {
            p
        } else {
            let z: Vec<f64> = p
                .as_slice()
                .iter()
                .map(|&x| x.ln() / spec.sharpen_t)
                .collect();
            ConfidenceVector::normalized(softmax_unchecked(&z))?
        };
        labels.push(y);
        confidences.push(c);
    }
    PredictionDataset::new(spec.k, labels, confidences)
}

/// Closed-form confidence of the labelled class for noiseless ETF logits of
/// radius `rho`: `e^{ρK/(K-1)} / (e^{ρK/(K-1)} + K - 1)`.
pub fn etf_top_confidence(rho: f64, k: usize) -> f64 {
    let a = rho * k as f64 / (k - 1) as f64;
    // Divide through by e^a to stay finite for large radii.
    1.0 / (1.0 + (k - 1) as f64 * (-a).exp())
}

/// Noiseless ETF logits for label `y` (1-based).
pub fn etf_logits(rho: f64, y: usize, k: usize) -> Vec<f64> {
    let off = -rho / (k - 1) as f64;
    let shift = 1.0 / k as f64;
    (0..k)
        .map(|j| if j + 1 == y { rho + shift } else { off + shift })
        .collect()
}

pub fn gen_etf(spec: &EtfSpec) -> Result<PredictionDataset> {
    gen_etf_stream(spec, 0)
}

pub fn gen_etf_stream(spec: &EtfSpec, stream: u64) -> Result<PredictionDataset> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, stream);
    let label_dist = WeightedIndex::new(&spec.class_weights).map_err(|e| invalid(e.to_string()))?;
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| invalid(e.to_string()))?;
    let mut labels = Vec::with_capacity(spec.n);
    let mut logits = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let y = label_dist.sample(&mut rng) + 1;
        let mut l = etf_logits(spec.radii[y - 1], y, spec.k);
        if spec.noise_sigma > 0.0 {
            l.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        labels.push(y);
        logits.push(l);
    }
    PredictionDataset::from_logits(spec.k, labels, logits)
}
