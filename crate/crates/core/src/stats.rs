//! One-pass, mergeable sample moments and the moment-based shape test.

use serde::Serialize;

/// Running central moments up to order 4 (Pébay's pairwise update).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.merge_from(&Moments {
            n: 1,
            mean: x,
            ..Default::default()
        });
    }

    /// Combines two accumulators; `a.merge(b)` equals pushing b's samples after a's
    /// up to rounding.
    pub fn merge(mut self, other: &Moments) -> Moments {
        self.merge_from(other);
        self
    }

    fn merge_from(&mut self, b: &Moments) {
        if b.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *b;
            return;
        }
        let (na, nb) = (self.n as f64, b.n as f64);
        let n = na + nb;
        let d = b.mean - self.mean;
        let d2 = d * d;
        let mean = self.mean + d * nb / n;
        let m2 = self.m2 + b.m2 + d2 * na * nb / n;
        let m3 = self.m3 + b.m3 + d * d2 * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * b.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + b.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * b.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * b.m3 - nb * self.m3) / n;
        *self = Moments {
            n: self.n + b.n,
            mean,
            m2,
            m3,
            m4,
        };
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.m2 / (self.n - 1) as f64
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Standard error of the sample variance, `sqrt((m4 - s⁴)/n)` with plug-in moments.
    pub fn se_variance(&self) -> f64 {
        let n = self.n as f64;
        let c2 = self.m2 / n;
        let c4 = self.m4 / n;
        ((c4 - c2 * c2).max(0.0) / n).sqrt()
    }

    /// `g1 = m3 / m2^{3/2}` with population moments.
    pub fn skewness(&self) -> f64 {
        let n = self.n as f64;
        if self.m2 == 0.0 {
            return 0.0;
        }
        n.sqrt() * self.m3 / self.m2.powf(1.5)
    }

    /// `g2 = m4 / m2² - 3`.
    pub fn excess_kurtosis(&self) -> f64 {
        let n = self.n as f64;
        if self.m2 == 0.0 {
            return 0.0;
        }
        n * self.m4 / (self.m2 * self.m2) - 3.0
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeTest {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub skew_band: f64,
    pub kurtosis_band: f64,
    pub gaussian_compatible: bool,
}

/// Gaussian iff `|skew| < 4√(6/R)` and `|exkurt| < 4√(24/R)`.
pub fn shape_test(m: &Moments) -> ShapeTest {
    let r = m.count() as f64;
    let skew_band = 4.0 * (6.0 / r).sqrt();
    let kurtosis_band = 4.0 * (24.0 / r).sqrt();
    let skewness = m.skewness();
    let excess_kurtosis = m.excess_kurtosis();
    ShapeTest {
        skewness,
        excess_kurtosis,
        skew_band,
        kurtosis_band,
        gaussian_compatible: skewness.abs() < skew_band && excess_kurtosis.abs() < kurtosis_band,
    }
}

pub fn shape_test_samples(samples: &[f64]) -> ShapeTest {
    shape_test(&samples.iter().copied().collect())
}

/// Sample correlation of two equally long slices.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
