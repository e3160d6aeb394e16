//! Reproducible Gaussian sampling and ensemble statistics.
//!
//! Every stream is a ChaCha8 generator keyed by `master_seed` and placed on
//! its own 64-bit stream `stream_id`, so each draw is a pure function of
//! `(master_seed, stream_id, counter)` and streams can be handed to workers
//! without shared state.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::SpectralField;
use crate::harmonics::{eigenvalue_sq, lambda};

type C64 = Complex64;

/// Deterministic source of complex standard Gaussians.
#[derive(Clone, Debug)]
pub struct GaussianStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self { master_seed, stream_id, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Position in the underlying keystream (32-bit words consumed).
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// `g = (x + iy)/√2` with x, y independent standard normals.
    pub fn complex_gaussian(&mut self) -> C64 {
        let x: f64 = self.rng.sample(StandardNormal);
        let y: f64 = self.rng.sample(StandardNormal);
        C64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn sample_complex_gaussians(&mut self, count: usize) -> Vec<C64> {
        (0..count).map(|_| self.complex_gaussian()).collect()
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// `e_n = (2n+1)^{-1/2} Σ_k g_{n,k} b_{n,k}` as a field of degree bound `n_max`.
pub fn sample_e_n(stream: &mut GaussianStream, n: usize, n_max: usize) -> Result<SpectralField> {
    if n > n_max {
        return Err(Error::Input(format!("degree {n} exceeds field degree {n_max}")));
    }
    let mut f = SpectralField::zeros(n_max);
    let scale = 1.0 / ((2 * n + 1) as f64).sqrt();
    for c in f.degree_mut(n) {
        *c = stream.complex_gaussian() * scale;
    }
    Ok(f)
}

/// `φ_α = Σ_{n ≤ n_max} λ_n^{-α} Σ_k g_{n,k} b_{n,k}`, drawn from one
/// stream in degree order.
pub fn sample_phi_alpha(stream: &mut GaussianStream, alpha: f64, n_max: usize) -> SpectralField {
    let mut f = SpectralField::zeros(n_max);
    for n in 0..=n_max {
        let w = lambda(n).powf(-alpha);
        for c in f.degree_mut(n) {
            *c = stream.complex_gaussian() * w;
        }
    }
    f
}

/// `φ_α` with degree n drawn from its own stream `(master_seed, n)`.
///
/// Truncations at different degrees share their common coefficients, and
/// each degree is independent of every other, which the shell-by-shell
/// constructions rely on.
pub fn sample_phi_alpha_by_degree(master_seed: u64, alpha: f64, n_max: usize) -> SpectralField {
    let mut f = SpectralField::zeros(n_max);
    for n in 0..=n_max {
        let mut stream = GaussianStream::new(master_seed, n as u64);
        let w = lambda(n).powf(-alpha);
        for c in f.degree_mut(n) {
            *c = stream.complex_gaussian() * w;
        }
    }
    f
}

/// E‖φ_α‖²_{H^s} = Σ_{n ≤ n_max} λ_n^{2s−2α}(2n+1).
pub fn expected_hs_sq(alpha: f64, s: f64, n_max: usize) -> f64 {
    (0..=n_max).map(|n| (eigenvalue_sq(n) as f64).powf(s - alpha) * (2 * n + 1) as f64).sum()
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub name: String,
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl EnsembleEstimate {
    pub fn from_samples(name: &str, samples: &[f64]) -> Self {
        let count = samples.len();
        let mean = samples.iter().sum::<f64>() / count as f64;
        let var =
            if count > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64 } else { 0.0 };
        Self { name: name.to_string(), mean, std_error: (var / count as f64).sqrt(), count }
    }

    /// |mean − target| measured in standard errors (∞ if the error is zero
    /// and the mean differs).
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Evaluates `functional` on `count` independent streams
/// `(master_seed, 0..count)` in parallel.
pub fn ensemble_estimate<F>(master_seed: u64, name: &str, count: usize, functional: F) -> Result<EnsembleEstimate>
where
    F: Fn(&mut GaussianStream) -> Result<f64> + Sync,
{
    if count < 2 {
        return Err(Error::Input("an ensemble needs at least two samples".into()));
    }
    let samples: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut stream = GaussianStream::new(master_seed, i as u64);
            functional(&mut stream).map_err(|e| Error::Sample { index: i, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    Ok(EnsembleEstimate::from_samples(name, &samples))
}

/// Two-sample Kolmogorov–Smirnov statistic sup |F_a − F_b|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Critical value of the two-sample KS statistic at the 1% level
/// (asymptotic coefficient 1.628).
pub fn ks_critical_1pct(na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    1.628 * ((na + nb) / (na * nb)).sqrt()
}

/// Least-squares slope of `ln y` against `ln x` over points with `y > 0`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, &y)| y > 0.0).map(|(&x, &y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
