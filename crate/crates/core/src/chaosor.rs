//! Wiener-chaos oracle: Hermite polynomials, the product formula on
//! tensor-power kernels, and the leading chaos term of the cross variation.

/// Probabilists' Hermite polynomial `H_n(x)`, by `H_{n+1} = x H_n - n H_{n-1}`.
pub fn hermite_poly(n: u32, x: f64) -> f64 {
    hermite_pair(n, x).0
}

/// `(H_n(x), H_{n+1}(x))`.
pub fn hermite_pair(n: u32, x: f64) -> (f64, f64) {
    let (mut h0, mut h1) = (1.0, x);
    for k in 1..=n {
        let h2 = x * h1 - f64::from(k) * h0;
        h0 = h1;
        h1 = h2;
    }
    (h0, h1)
}

use gauss_quad::legendre::GaussLegendre;
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::Serialize;

use crate::analytic::{
    alpha_k, beta, beta_tilde, beta_tilde_pair, binomial, epsilon, factorial, norm_constant, DeltaTable,
    SignPowerWeight, MAX_EXACT_N,
};
use crate::error::{domain, Error, Result};
use crate::model::{check_hurst, check_order};
use crate::numeric::relative_change;
use crate::seeds::stream_rng;

/// Largest order accepted by [`hermite_poly`]-based checks.
pub const MAX_HERMITE_ORDER: u32 = 64;
/// Largest `m`, `n` for the product formula check.
pub const MAX_PRODUCT_ORDER: u32 = 6;
/// Correlations closer to ±1 than this make the two-function basis unusable.
pub const BASIS_TOL: f64 = 1e-10;

/// Two functions on a weighted abscissa grid and the powers of the tensor kernels
/// `g^{⊗a}`, `h^{⊗b}` built from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorPowerKernel {
    pub weights: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub a: u32,
    pub b: u32,
}

impl TensorPowerKernel {
    pub fn new(weights: Vec<f64>, g: Vec<f64>, h: Vec<f64>, a: u32, b: u32) -> Result<Self> {
        if weights.len() != g.len() || g.len() != h.len() || g.is_empty() {
            return domain("g, h and weights must have the same nonzero length");
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return domain("weights must be finite and nonnegative");
        }
        let k = Self { weights, g, h, a, b };
        if !(k.norm_g() > 0.0 && k.norm_h() > 0.0 && k.norm_g().is_finite() && k.norm_h().is_finite()) {
            return domain("g and h need finite nonzero norms");
        }
        Ok(k)
    }

    fn dot(&self, x: &[f64], y: &[f64]) -> f64 {
        self.weights.iter().zip(x).zip(y).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn inner(&self) -> f64 {
        self.dot(&self.g, &self.h)
    }

    pub fn norm_g(&self) -> f64 {
        self.dot(&self.g, &self.g).sqrt()
    }

    pub fn norm_h(&self) -> f64 {
        self.dot(&self.h, &self.h).sqrt()
    }

    /// Correlation `⟨g,h⟩/(‖g‖‖h‖)` of the normalized pair.
    pub fn correlation(&self) -> f64 {
        self.inner() / (self.norm_g() * self.norm_h())
    }
}

// I_m(ĝ^{⊗m}) I_n(ĥ^{⊗n}) and the product-formula expansion, for unit ĝ, ĥ with
// ĥ = ρ e1 + s e2 and (ξ1, ξ2) = (I_1(e1), I_1(e2)).
fn product_sides(m: u32, n: u32, rho: f64, x1: f64, x2: f64) -> (f64, f64) {
    let s = (1.0 - rho * rho).sqrt();
    let lhs = hermite_poly(m, x1) * hermite_poly(n, rho * x1 + s * x2);
    let mut rhs = 0.0;
    for k in 0..=m.min(n) {
        let coef = factorial(k) * binomial(m, k) * binomial(n, k) * rho.powi(k as i32);
        let b = n - k;
        // I_{m+n-2k}(ĝ^{⊗(m-k)} ⊗ ĥ^{⊗b}) with ĥ expanded in (e1, e2)
        let mut term = 0.0;
        for j in 0..=b {
            term += binomial(b, j)
                * rho.powi((b - j) as i32)
                * s.powi(j as i32)
                * hermite_poly(m - k + b - j, x1)
                * hermite_poly(j, x2);
        }
        rhs += coef * term;
    }
    (lhs, rhs)
}

/// Largest `|I_m(g^{⊗m}) I_n(h^{⊗n}) - Σ_k k! C(m,k) C(n,k) I_{m+n-2k}(g^{⊗m} ⊗_k h^{⊗n})|`
/// over `trials` Gaussian draws, with g and h normalized to unit length.
pub fn product_formula_check(kernel: &TensorPowerKernel, trials: usize, seed: u64) -> Result<f64> {
    let (m, n) = (kernel.a, kernel.b);
    if m > MAX_PRODUCT_ORDER || n > MAX_PRODUCT_ORDER {
        return domain(format!("m = {m}, n = {n} must be at most {MAX_PRODUCT_ORDER}"));
    }
    let rho = kernel.correlation();
    if rho.abs() > 1.0 - BASIS_TOL {
        return Err(Error::IllConditioned(rho));
    }
    Ok(product_formula_deviation(m, n, rho, trials, seed))
}

/// [`product_formula_check`] for a given correlation of the unit functions.
pub fn product_formula_deviation(m: u32, n: u32, rho: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(&[seed, u64::from(m), u64::from(n)]);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x1: f64 = rng.sample(StandardNormal);
        let x2: f64 = rng.sample(StandardNormal);
        let (l, r) = product_sides(m, n, rho, x1, x2);
        worst = worst.max((l - r).abs());
    }
    worst
}

/// `M(k,q,H1,H2) = c(H1,q) c(H2,q+1) k! C(q,k) C(q+1,k)`.
pub fn m_coefficient(k: u32, q: u32, h1: f64, h2: f64) -> Result<f64> {
    check_order(q)?;
    if k > q {
        return domain(format!("k = {k} must lie in [0, q = {q}]"));
    }
    Ok(norm_constant(q, h1)? * norm_constant(q + 1, h2)? * factorial(k) * binomial(q, k) * binomial(q + 1, k))
}

/// One term `V^{(3,k)}` of the chaos expansion of the cross variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChaosTermSpec {
    pub k: u32,
    /// Chaos order `2q + 1 - 2k`.
    pub multiplicity: u32,
    pub coefficient: f64,
}

impl ChaosTermSpec {
    pub fn new(k: u32, q: u32, h1: f64, h2: f64) -> Result<Self> {
        Ok(Self {
            k,
            multiplicity: 2 * q + 1 - 2 * k,
            coefficient: m_coefficient(k, q, h1, h2)?,
        })
    }
}

/// Variance of the leading term `V^{(3,q)}` for all N, from one table of Δ(ℓ).
///
/// `E[(V^{(3,q)}_N)²] = M(q,q)² β(a2+1, -2a2-1) γ^{2H1+2H2} Σ_{i,j} Δ(i-j)` with
/// `F(U,V) = [β̃_{a1,a2}(U,V) |U-V|^{-H1*}]^q`, `α1 = 0`, `α2 = 2(1-H2)/(q+1)`.
#[derive(Debug, Clone, Serialize)]
pub struct Sigma3Table {
    pub q: u32,
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H2")]
    pub h2: f64,
    pub weight: SignPowerWeight,
    /// `M(q,q)² β(a2+1, -2a2-1)`.
    pub prefactor: f64,
    pub table: DeltaTable,
}

impl Sigma3Table {
    pub fn new(q: u32, h1: f64, h2: f64) -> Result<Self> {
        check_order(q)?;
        check_hurst("H1", h1)?;
        check_hurst("H2", h2)?;
        let (qf, q1) = (f64::from(q), f64::from(q + 1));
        let a1 = -(0.5 + (1.0 - h1) / qf);
        let a2 = -(0.5 + (1.0 - h2) / q1);
        let h1_star = (1.0 - h1) / qf + (1.0 - h2) / q1;
        let kappa = qf * h1_star;
        if kappa >= 1.0 {
            return domain(format!("q H1* = {kappa} must be below 1"));
        }
        let (below, above) = beta_tilde_pair(a1, a2)?;
        let weight = SignPowerWeight {
            below: below.powi(q as i32),
            above: above.powi(q as i32),
            kappa,
        };
        let alpha2 = 2.0 * (1.0 - h2) / q1;
        let table = DeltaTable::new(0.0, alpha2, &weight)?;
        let m = m_coefficient(q, q, h1, h2)?;
        let prefactor = m * m * beta(a2 + 1.0, -2.0 * a2 - 1.0)?;
        Ok(Self {
            q,
            h1,
            h2,
            weight,
            prefactor,
            table,
        })
    }

    pub fn variance(&self, n: usize, gamma: f64) -> Result<f64> {
        if n == 0 || n > MAX_EXACT_N {
            return domain(format!("N = {n} must lie in [1, {MAX_EXACT_N}]"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return domain(format!("gamma = {gamma} must be positive"));
        }
        Ok(self.prefactor * gamma.powf(2.0 * (self.h1 + self.h2)) * self.table.sum_delta(n))
    }

    /// `b² = lim N^{-2+α2} γ^{-2(H1+H2)} E[(V^{(3,q)}_N)²]`.
    pub fn b_squared(&self) -> Result<f64> {
        Ok(self.prefactor * self.table.limit()?)
    }

    /// Growth exponent `2 - 2(1-H2)/(q+1)` of the variance in N.
    pub fn exponent(&self) -> f64 {
        2.0 - self.table.alpha()
    }
}

pub fn sigma3_exact(q: u32, h1: f64, h2: f64, n: usize, gamma: f64) -> Result<f64> {
    Sigma3Table::new(q, h1, h2)?.variance(n, gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBoundRow {
    pub k: u32,
    pub alpha: f64,
    /// `2 - min(α(k), 1)`.
    pub exponent: f64,
    pub log_flag: u8,
}

/// Upper-bound exponents of `‖V^{(3,k)}_N‖²` for k = 0..q; the k = q row is the
/// strict maximum.
pub fn chaos_rate_bounds(q: u32, h1: f64, h2: f64) -> Result<Vec<RateBoundRow>> {
    let rows = (0..=q)
        .map(|k| {
            let alpha = alpha_k(q, k, h1, h2)?;
            Ok(RateBoundRow {
                k,
                alpha,
                exponent: 2.0 - alpha.min(1.0),
                log_flag: epsilon(alpha),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let top = rows[q as usize].exponent;
    assert!(
        rows[..q as usize].iter().all(|r| r.exponent < top),
        "leading chaos term is not k = q"
    );
    Ok(rows)
}

// ∫_0^len y^e g(y) dy through z = y^{1+e}, which leaves a smooth integrand.
fn endpoint_power(rule: &GaussLegendre, len: f64, e: f64, g: impl Fn(f64) -> f64) -> f64 {
    let p = 1.0 / (1.0 + e);
    rule.integrate(0.0, len.powf(1.0 + e), |z| g(z.powf(p))) * p
}

/// `∫_{-∞}^{u∧v} (u-s)^a (v-s)^b ds` by quadrature: the singular piece
/// `[0, |u-v|]` in `y = u∧v - s`, and the tail mapped onto (0, 1] by `y = |u-v|/x`,
/// each with the endpoint power removed by substitution.
pub fn beta_tilde_integral(a: f64, b: f64, u: f64, v: f64) -> Result<f64> {
    beta_tilde(a, b, u, v)?;
    let d = (u - v).abs();
    let (e1, e2) = if u < v { (a, b) } else { (b, a) };
    let g = -e1 - e2 - 2.0;
    let at = |nodes: usize| -> Result<f64> {
        let rule = GaussLegendre::new(nodes).map_err(|e| Error::Domain(e.to_string()))?;
        let near = endpoint_power(&rule, d, e1, |y| (y + d).powf(e2));
        let far = endpoint_power(&rule, 1.0, g, |x| (1.0 + x).powf(e2));
        Ok(near + d.powf(1.0 + e1 + e2) * far)
    };
    let (mut prev, mut nodes) = (at(16)?, 16);
    loop {
        nodes *= 2;
        let next = at(nodes)?;
        let change = relative_change(next, prev);
        if change < 1e-10 {
            return Ok(next);
        }
        if nodes >= 256 {
            return Err(Error::QuadratureConvergence {
                what: format!("beta_tilde integral at a={a}, b={b}"),
                rel_change: change,
            });
        }
        prev = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaTildeCheck {
    pub a: f64,
    pub b: f64,
    pub u: f64,
    pub v: f64,
    pub integral: f64,
    pub closed_form: f64,
    pub rel_err: f64,
}

/// Random `(a, b, u, v)` with `a, b > -1`, `a + b < -1`, `|u - v| ≥ 0.05`.
pub fn beta_tilde_checks(count: usize, seed: u64) -> Result<Vec<BetaTildeCheck>> {
    let mut rng = stream_rng(&[seed]);
    let ua = Uniform::<f64>::new(-0.9, -0.2);
    let uu = Uniform::<f64>::new(0.0, 2.0);
    (0..count)
        .map(|_| {
            let a = rng.sample(ua);
            let b = rng.sample(Uniform::new(-0.9, -1.05 - a));
            let u = rng.sample(uu);
            let mut v = rng.sample(uu);
            while (u - v).abs() < 0.05 {
                v = rng.sample(uu);
            }
            let integral = beta_tilde_integral(a, b, u, v)?;
            let closed_form = beta_tilde(a, b, u, v)? * (u - v).abs().powf(a + b + 1.0);
            Ok(BetaTildeCheck {
                a,
                b,
                u,
                v,
                integral,
                closed_form,
                rel_err: relative_change(integral, closed_form),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sigma3Row {
    #[serde(rename = "N")]
    pub n: usize,
    pub gamma: f64,
    pub variance: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBoundsTable {
    pub q: u32,
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H2")]
    pub h2: f64,
    pub rows: Vec<RateBoundRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub beta_tilde_checks: Vec<BetaTildeCheck>,
    pub product_formula_max_dev: f64,
    pub sigma3_table: Vec<Sigma3Row>,
    pub b_squared: f64,
    pub rate_bounds_table: RateBoundsTable,
}

/// The product formula on all `(m, n)` with `m + n ≤ 6` (m, n ≥ 1) and
/// `ρ ∈ {0, ±0.3, ±0.9}`.
pub fn product_formula_sweep(trials: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for m in 1..=MAX_PRODUCT_ORDER {
        for n in 1..=MAX_PRODUCT_ORDER - m {
            for rho in [0.0, 0.3, -0.3, 0.9, -0.9] {
                worst = worst.max(product_formula_deviation(m, n, rho, trials, seed));
            }
        }
    }
    worst
}

/// Everything the `oracle` subcommand reports, for one `(q, H1, H2)`.
pub fn oracle_report(q: u32, h1: f64, h2: f64, n_grid: &[usize], gamma: f64, seed: u64) -> Result<OracleReport> {
    let beta_tilde_checks = beta_tilde_checks(20, seed)?;
    let product_formula_max_dev = product_formula_sweep(1000, seed);
    let table = Sigma3Table::new(q, h1, h2)?;
    let sigma3_table = n_grid
        .iter()
        .map(|&n| {
            let variance = table.variance(n, gamma)?;
            Ok(Sigma3Row {
                n,
                gamma,
                variance,
                normalized: variance * (n as f64).powf(-table.exponent()) * gamma.powf(-2.0 * (h1 + h2)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleReport {
        beta_tilde_checks,
        product_formula_max_dev,
        sigma3_table,
        b_squared: table.b_squared()?,
        rate_bounds_table: RateBoundsTable {
            q,
            h1,
            h2,
            rows: chaos_rate_bounds(q, h1, h2)?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;

    // Gauss–Hermite nodes and weights for the standard normal (Golub–Welsch).
    fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
        let j = DMatrix::from_fn(n, n, |i, k| {
            if i + 1 == k || k + 1 == i {
                (i.max(k) as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(j);
        let nodes = eig.eigenvalues.iter().copied().collect();
        let weights = (0..n).map(|i| eig.eigenvectors[(0, i)].powi(2)).collect();
        (nodes, weights)
    }

    #[test]
    fn hermite_small_orders() {
        for &x in &[-1.3, 0.0, 0.4, 2.5] {
            assert_eq!(hermite_poly(0, x), 1.0);
            assert_eq!(hermite_poly(1, x), x);
            assert!((hermite_poly(2, x) - (x * x - 1.0)).abs() < 1e-14);
            assert!((hermite_poly(3, x) - (x * x * x - 3.0 * x)).abs() < 1e-13);
            let (a, b) = hermite_pair(4, x);
            assert_eq!((a, b), (hermite_poly(4, x), hermite_poly(5, x)));
        }
    }

    #[test]
    fn hermite_orthogonality() {
        let (x, w) = gauss_hermite(24);
        for m in 0..=8u32 {
            for n in 0..=8u32 {
                let e: f64 = x.iter().zip(&w).map(|(&x, &w)| w * hermite_poly(m, x) * hermite_poly(n, x)).sum();
                let want = if m == n { factorial(n) } else { 0.0 };
                // relative to the natural scale sqrt(m! n!)
                let scale = (factorial(m) * factorial(n)).sqrt();
                assert!((e - want).abs() < 1e-10 * scale, "m={m} n={n}: {e}");
            }
        }
    }

    #[test]
    fn hermite_correlated_pair() {
        // E[H_3(X) H_3(Y)] = 3! ρ³ with Y = ρX + √(1-ρ²) Z
        let (x, w) = gauss_hermite(30);
        let (q, rho) = (3u32, 0.6f64);
        let s = (1.0 - rho * rho).sqrt();
        let mut e = 0.0;
        for (&a, &wa) in x.iter().zip(&w) {
            for (&b, &wb) in x.iter().zip(&w) {
                e += wa * wb * hermite_poly(q, a) * hermite_poly(q, rho * a + s * b);
            }
        }
        assert!((e - 6.0 * rho.powi(3)).abs() < 1e-10);
    }

    fn kernel(rho: f64, a: u32, b: u32) -> TensorPowerKernel {
        // g = e1, h = ρ e1 + √(1-ρ²) e2 on a 3-point grid, then scaled
        let s = (1.0 - rho * rho).sqrt();
        TensorPowerKernel::new(
            vec![0.5, 0.5, 1.0],
            vec![2.0, 0.0, 0.0],
            vec![1.4 * rho, 1.4 * s, 0.0],
            a,
            b,
        )
        .unwrap()
    }

    #[test]
    fn product_formula_cases() {
        // I_1(g) I_1(h) = I_2(g ⊗ h) + ⟨g,h⟩
        let (l, r) = product_sides(1, 1, 0.4, 0.7, -1.1);
        let i2 = 0.7 * (0.4 * 0.7 + (1.0 - 0.16f64).sqrt() * -1.1) - 0.4;
        assert!((l - r).abs() < 1e-14 && (r - i2 - 0.4).abs() < 1e-14);
        assert!(product_formula_check(&kernel(0.5, 1, 2), 1000, 1).unwrap() < 1e-9);
        // ρ = 0: only the k = 0 term, H_m(x1) H_n(x2)
        let (l, r) = product_sides(2, 3, 0.0, 0.3, 1.9);
        assert!((l - hermite_poly(2, 0.3) * hermite_poly(3, 1.9)).abs() < 1e-14);
        assert!((l - r).abs() < 1e-12);
        assert!((kernel(-0.3, 1, 1).correlation() + 0.3).abs() < 1e-14);
        assert!(matches!(
            product_formula_check(&kernel(1.0, 2, 2), 10, 1),
            Err(Error::IllConditioned(_))
        ));
        assert!(product_formula_check(&kernel(0.3, 7, 1), 10, 1).is_err());
    }

    #[test]
    fn m_coefficient_examples() {
        let (h1, h2) = (0.85, 0.7);
        let c = norm_constant(1, h1).unwrap() * norm_constant(2, h2).unwrap();
        assert!((m_coefficient(0, 1, h1, h2).unwrap() - c).abs() < 1e-14);
        assert!((m_coefficient(1, 1, h1, h2).unwrap() - 2.0 * c).abs() < 1e-14);
        for k in 1..=4u32 {
            let r = m_coefficient(k, 4, 0.9, 0.8).unwrap() / m_coefficient(k - 1, 4, 0.9, 0.8).unwrap();
            let want = f64::from((4 - k + 1) * (4 + 2 - k)) / f64::from(k);
            assert!((r - want).abs() < 1e-12);
        }
        assert!(m_coefficient(2, 1, h1, h2).is_err());
        let t = ChaosTermSpec::new(0, 2, 0.9, 0.85).unwrap();
        assert_eq!(t.multiplicity, 5);
    }

    #[test]
    fn rate_bounds_example() {
        let rows = chaos_rate_bounds(1, 0.85, 0.7).unwrap();
        assert!((rows[0].alpha - 0.9).abs() < 1e-14);
        assert!((rows[0].exponent - 1.1).abs() < 1e-14);
        assert!((rows[1].exponent - 1.7).abs() < 1e-14);
        assert_eq!(rows[0].log_flag, 0);
    }

    #[test]
    fn beta_tilde_integral_matches() {
        for c in beta_tilde_checks(5, 3).unwrap() {
            assert!(c.rel_err < 1e-6, "{c:?}");
        }
        assert!(beta_tilde_integral(-0.6, -0.6, 0.5, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn leading_term_dominates(q in 1u32..4, h1 in 0.5001f64..0.9999, h2 in 0.5001f64..0.9999) {
            let rows = chaos_rate_bounds(q, h1, h2).unwrap();
            for w in rows.windows(2) {
                prop_assert!(w[0].exponent <= w[1].exponent);
            }
            let top = rows[q as usize];
            prop_assert!((top.exponent - (2.0 - 2.0 * (1.0 - h2) / f64::from(q + 1))).abs() < 1e-12);
        }
    }
}
