//! Exact stationary Gaussian sequences by circulant embedding.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::analytic::fgn_autocov;
use crate::error::{domain, Error, Result};
use crate::seeds::stream_rng;

/// Relative eigenvalue tolerance: values in `[-tol·max, 0)` are clamped to 0.
pub const EIGEN_RTOL: f64 = 1e-10;
/// Embedding doublings tried before giving up.
pub const MAX_DOUBLINGS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AutocovModel {
    /// Unit-variance fractional Gaussian noise with index `h`.
    Fgn { h: f64 },
}

impl AutocovModel {
    pub fn fgn(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return domain(format!("fGn index {h} must lie in (0, 1)"));
        }
        Ok(AutocovModel::Fgn { h })
    }

    pub fn autocov(&self, k: i64) -> f64 {
        match *self {
            AutocovModel::Fgn { h } => fgn_autocov(h, k),
        }
    }
}

#[derive(Clone)]
pub struct CirculantSampler {
    model: AutocovModel,
    n: usize,
    m: usize,
    eigenvalues: Vec<f64>,
    // sqrt(λ_k / m)
    scale: Vec<f64>,
    clamped_mass: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("model", &self.model)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("clamped_mass", &self.clamped_mass)
            .finish()
    }
}

fn embedding_eigenvalues(model: &AutocovModel, m: usize, fft: &dyn Fft<f64>) -> Vec<f64> {
    let half = m / 2;
    let mut c: Vec<Complex64> = (0..m)
        .map(|j| {
            let k = if j <= half { j } else { m - j };
            Complex64::new(model.autocov(k as i64), 0.0)
        })
        .collect();
    fft.process(&mut c);
    c.into_iter().map(|z| z.re).collect()
}

/// Circulant embedding of `[r(|i-j|)]_{i,j<n}`, with up to
/// [`MAX_DOUBLINGS`] retries at twice the embedding length.
pub fn build_sampler(model: AutocovModel, n: usize) -> Result<CirculantSampler> {
    if n < 2 {
        return domain("the sequence length n must be at least 2");
    }
    let mut m = (2 * (n - 1)).next_power_of_two().max(2);
    let mut planner = FftPlanner::new();
    let mut last_min = 0.0;
    for _ in 0..=MAX_DOUBLINGS {
        let fft = planner.plan_fft_forward(m);
        let eig = embedding_eigenvalues(&model, m, fft.as_ref());
        let max = eig.iter().cloned().fold(0.0, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min >= -EIGEN_RTOL * max {
            let clamped_mass: f64 = eig.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
            let scale = eig.iter().map(|&l| (l.max(0.0) / m as f64).sqrt()).collect();
            return Ok(CirculantSampler {
                model,
                n,
                m,
                eigenvalues: eig,
                scale,
                clamped_mass,
                fft,
            });
        }
        last_min = min;
        m *= 2;
    }
    Err(Error::EmbeddingFailure {
        embedding: m / 2,
        min_eigenvalue: last_min,
    })
}

impl CirculantSampler {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn embedding_len(&self) -> usize {
        self.m
    }

    pub fn model(&self) -> AutocovModel {
        self.model
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Total negative eigenvalue mass set to zero.
    pub fn clamped_mass(&self) -> f64 {
        self.clamped_mass
    }

    /// Two independent draws from one complex transform.
    pub fn sample_pair_with<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut w: Vec<Complex64> = self
            .scale
            .iter()
            .map(|&s| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                Complex64::new(s * a, s * b)
            })
            .collect();
        self.fft.process(&mut w);
        let re = w[..self.n].iter().map(|z| z.re).collect();
        let im = w[..self.n].iter().map(|z| z.im).collect();
        (re, im)
    }

    pub fn sample_pair(&self, seed: u64) -> (Vec<f64>, Vec<f64>) {
        self.sample_pair_with(&mut stream_rng(&[seed]))
    }

    /// A mean-zero Gaussian vector with covariance `[r(|i-j|)]`.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        self.sample_pair(seed).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn white_noise_has_flat_spectrum() {
        let s = build_sampler(AutocovModel::fgn(0.5).unwrap(), 100).unwrap();
        assert!(s.eigenvalues().iter().all(|&l| (l - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fgn_embedding_is_nonnegative() {
        for &h in &[0.55, 0.7, 0.9, 0.99] {
            let s = build_sampler(AutocovModel::fgn(h).unwrap(), 1024).unwrap();
            let max = s.eigenvalues().iter().cloned().fold(0.0, f64::max);
            let trace: f64 = s.eigenvalues().iter().sum();
            assert!(s.eigenvalues().iter().all(|&l| l >= -EIGEN_RTOL * max), "h={h}");
            assert!(s.clamped_mass() < 1e-8 * trace);
        }
    }

    #[test]
    fn embedding_reproduces_the_autocovariance() {
        // inverse transform of the eigenvalues gives back the first row
        let model = AutocovModel::fgn(0.8).unwrap();
        let s = build_sampler(model, 300).unwrap();
        let m = s.embedding_len();
        let mut planner = FftPlanner::new();
        let inv = planner.plan_fft_inverse(m);
        let mut c: Vec<Complex64> = s.eigenvalues().iter().map(|&l| Complex64::new(l, 0.0)).collect();
        inv.process(&mut c);
        for k in 0..300 {
            assert!((c[k].re / m as f64 - model.autocov(k as i64)).abs() < 1e-12);
        }
    }

    #[test]
    fn determinism_and_length() {
        let s = build_sampler(AutocovModel::fgn(0.7).unwrap(), 37).unwrap();
        assert_eq!(s.sample(9), s.sample(9));
        assert_ne!(s.sample(9), s.sample(10));
        assert_eq!(s.sample(1).len(), 37);
        assert!(build_sampler(AutocovModel::fgn(0.7).unwrap(), 1).is_err());
        assert!(AutocovModel::fgn(1.0).is_err());
    }

    #[test]
    fn two_point_covariance() {
        let model = AutocovModel::fgn(0.7).unwrap();
        let s = build_sampler(model, 2).unwrap();
        let mut rng = stream_rng(&[5]);
        let reps = 100_000;
        let (mut sxy, mut sxx, mut sx0) = (0.0, 0.0, 0.0);
        for _ in 0..reps / 2 {
            let (a, b) = s.sample_pair_with(&mut rng);
            for x in [a, b] {
                sxy += x[0] * x[1];
                sxx += x[0] * x[0];
                sx0 += x[0];
            }
        }
        let n = reps as f64;
        let r1 = model.autocov(1);
        assert!((r1 - 0.5 * (2f64.powf(1.4) - 2.0)).abs() < 1e-15);
        // Var(X0 X1) = 1 + r1²
        let se = ((1.0 + r1 * r1) / n).sqrt();
        assert!((sxy / n - r1).abs() < 3.0 * se, "{} vs {r1}", sxy / n);
        assert!((sxx / n - 1.0).abs() < 3.0 * (2.0 / n).sqrt());
        assert!((sx0 / n).abs() < 3.0 / n.sqrt());
    }

    // Whitening with the Cholesky factor of the exact Toeplitz matrix must
    // give unit-variance, uncorrelated coordinates.
    #[test]
    fn cholesky_whitening() {
        let n = 48;
        let model = AutocovModel::fgn(0.85).unwrap();
        let t = DMatrix::from_fn(n, n, |i, j| model.autocov(i as i64 - j as i64));
        let l = t.clone().cholesky().expect("Toeplitz fGn matrix is positive definite").l();
        let s = build_sampler(model, n).unwrap();
        let mut rng = stream_rng(&[11]);
        let draws = 100_000;
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for _ in 0..draws / 2 {
            let (a, b) = s.sample_pair_with(&mut rng);
            for x in [a, b] {
                let z = l.solve_lower_triangular(&DVector::from_vec(x)).unwrap();
                cov += &z * z.transpose();
            }
        }
        cov /= draws as f64;
        let se = (1.0 / draws as f64).sqrt();
        for i in 0..n {
            assert!((cov[(i, i)] - 1.0).abs() < 4.0 * 2f64.sqrt() * se, "var {i}: {}", cov[(i, i)]);
            for j in 0..i {
                assert!(cov[(i, j)].abs() < 4.5 * se, "cov {i},{j}: {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn empirical_covariance_matches_toeplitz() {
        let n = 64;
        let model = AutocovModel::fgn(0.7).unwrap();
        let s = build_sampler(model, n).unwrap();
        let mut rng = stream_rng(&[3]);
        let draws = 200_000;
        let mut acc = vec![0.0; n];
        for _ in 0..draws / 2 {
            let (a, b) = s.sample_pair_with(&mut rng);
            for x in [a, b] {
                for k in 0..n {
                    acc[k] += x[0] * x[k];
                }
            }
        }
        for k in 0..n {
            let r = model.autocov(k as i64);
            let se = ((1.0 + r * r) / draws as f64).sqrt();
            assert!((acc[k] / draws as f64 - r).abs() < 4.0 * se, "lag {k}");
        }
    }
}
