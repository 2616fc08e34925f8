//! `Δ(ℓ) = ∫_{[0,1]^4} |U-U'+ℓ|^{-α1} |V-V'+ℓ|^{-α2} F(U,V) F(U',V')` and the
//! limit of `N^{α1+α2-2} Σ_{i,j<N} Δ(i-j)`.
//!
//! Weights here depend on `(U, V)` through `d = U - V` only. With
//! `d' = U' - V'` and `w = V - V'`, the two remaining free directions integrate
//! out exactly into the trapezoidal density of `w`, which leaves a 3-d
//! integral over `(d, d', w)` with all singular points known in advance.

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::numeric::{relative_change, CompensatedSum, GradedRule};

use super::exponents::epsilon;
use super::special::{binomial, binomial_real};

/// A nonnegative weight `F(U, V) = profile(U - V)` on `[0,1]²`.
pub trait PairWeight: Sync {
    fn profile(&self, d: f64) -> f64;

    /// `κ` in `F = O(|U-V|^{-κ})` near the diagonal.
    fn singular_exponent(&self) -> f64 {
        0.0
    }
}

/// `F ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantWeight(pub f64);

impl PairWeight for ConstantWeight {
    fn profile(&self, _d: f64) -> f64 {
        self.0
    }
}

/// `F(U,V) = below·|U-V|^{-κ}` for `U < V` and `above·|U-V|^{-κ}` for `U > V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignPowerWeight {
    pub below: f64,
    pub above: f64,
    pub kappa: f64,
}

impl PairWeight for SignPowerWeight {
    fn profile(&self, d: f64) -> f64 {
        let c = if d < 0.0 { self.below } else { self.above };
        c * d.abs().powf(-self.kappa)
    }

    fn singular_exponent(&self) -> f64 {
        self.kappa
    }
}

/// Relative tolerance for the node-doubling loop.
pub const DELTA_RTOL: f64 = 1e-4;
const START_NODES: usize = 8;
const MAX_NODES: usize = 128;
/// Lags at or beyond this use the moment expansion.
pub const FAR_LAG: u64 = 8;
const FAR_ORDER: u32 = 20;

fn check_alphas(alpha1: f64, alpha2: f64) -> Result<()> {
    for a in [alpha1, alpha2] {
        if !(0.0..1.0).contains(&a) {
            return domain(format!("alpha = {a} must lie in [0, 1)"));
        }
    }
    Ok(())
}

/// `2 γF² / ((1-α)(2-α))` with `α = α1 + α2 < 1`.
pub fn riemann_limit(alpha1: f64, alpha2: f64, gamma_f: f64) -> Result<f64> {
    check_alphas(alpha1, alpha2)?;
    let a = alpha1 + alpha2;
    if a >= 1.0 {
        return domain(format!(
            "alpha1 + alpha2 = {a} >= 1: the sum grows like N (log N)^{}",
            epsilon(a)
        ));
    }
    if !(gamma_f > 0.0) {
        return domain("gammaF must be positive");
    }
    Ok(2.0 * gamma_f * gamma_f / ((1.0 - a) * (2.0 - a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum RiemannAsymptotics {
    /// `N^{α-2} Σ Δ(i-j) → value`.
    Limit { value: f64 },
    /// `Σ Δ(i-j) ≤ C N (log N)^{log_power}`.
    LinearBound { log_power: u8 },
}

pub fn riemann_asymptotics(alpha1: f64, alpha2: f64, gamma_f: f64) -> Result<RiemannAsymptotics> {
    check_alphas(alpha1, alpha2)?;
    let a = alpha1 + alpha2;
    if a >= 1.0 {
        Ok(RiemannAsymptotics::LinearBound { log_power: epsilon(a) })
    } else {
        Ok(RiemannAsymptotics::Limit {
            value: riemann_limit(alpha1, alpha2, gamma_f)?,
        })
    }
}

// V-range for which U = V + d stays in [0, 1].
fn v_range(d: f64) -> (f64, f64) {
    ((-d).max(0.0), (1.0 - d).min(1.0))
}

// Splits [a, b] at `breaks`. Of two breaks closer than the tolerance the one
// listed first is kept, so list the points where the integrand is singular
// before the ones where it is merely not smooth.
fn pieces(a: f64, b: f64, breaks: &mut Vec<f64>) -> impl Iterator<Item = (f64, f64)> + '_ {
    let tol = 1e-14;
    let mut kept: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    for &c in breaks.iter() {
        if c > a + tol && c < b - tol && kept.iter().all(|k| (k - c).abs() > tol) {
            kept.push(c);
        }
    }
    kept.sort_by(f64::total_cmp);
    *breaks = kept;
    breaks.insert(0, a);
    breaks.push(b);
    breaks.windows(2).map(|w| (w[0], w[1]))
}

fn weight_integral<W: PairWeight + ?Sized>(f: &W, rule: &GradedRule) -> f64 {
    let mut acc = 0.0;
    for (lo, hi) in [(-1.0, 0.0), (0.0, 1.0)] {
        acc += rule.integrate(lo, hi, |d| f.profile(d) * (1.0 - d.abs()));
    }
    acc
}

/// `γF = ∫_{[0,1]²} F`, converged under node doubling.
pub fn weight_mass<W: PairWeight + ?Sized>(f: &W) -> Result<f64> {
    let k = f.singular_exponent();
    converge("weight integral", |n| weight_integral(f, &GradedRule::for_exponent(n, k)))
}

fn converge(what: &str, mut eval: impl FnMut(usize) -> f64) -> Result<f64> {
    let mut n = START_NODES;
    let mut prev = eval(n);
    let mut change = f64::INFINITY;
    while n < MAX_NODES {
        n *= 2;
        let next = eval(n);
        change = relative_change(next, prev);
        if !next.is_finite() {
            break;
        }
        if change < DELTA_RTOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureConvergence {
        what: what.to_string(),
        rel_change: change,
    })
}

fn delta_near<W: PairWeight + ?Sized>(ell: f64, alpha1: f64, alpha2: f64, f: &W, rule: &GradedRule) -> f64 {
    let mut outer = CompensatedSum::new();
    let mut bd = Vec::with_capacity(8);
    let mut bw = Vec::with_capacity(8);
    for (d_lo, d_hi) in [(-1.0, 0.0), (0.0, 1.0)] {
        for (d, wd) in rule.mapped(d_lo, d_hi) {
            let fd = f.profile(d);
            let (p1, p2) = v_range(d);
            bd.clear();
            bd.extend([0.0, d]);
            let mut mid = 0.0;
            for (e_lo, e_hi) in pieces(-1.0, 1.0, &mut bd) {
                for (dp, wdp) in rule.mapped(e_lo, e_hi) {
                    let fdp = f.profile(dp);
                    let (q1, q2) = v_range(dp);
                    let s = d - dp + ell;
                    // w = V - V' with V ∈ [p1, p2], V' ∈ [q1, q2]
                    let (w_lo, w_hi) = (p1 - q2, p2 - q1);
                    bw.clear();
                    bw.extend([-ell, -s, p1 - q1, p2 - q2]);
                    let mut inner = 0.0;
                    for (a, b) in pieces(w_lo, w_hi, &mut bw) {
                        inner += rule.integrate_nodes(a, b, |n| {
                            let w = n.x;
                            let t = p2.min(q2 + w) - p1.max(q1 + w);
                            // nodes next to ±1 can round onto it and leave an empty range
                            if t <= 0.0 {
                                return 0.0;
                            }
                            t * n.dist(-s).powf(-alpha1) * n.dist(-ell).powf(-alpha2)
                        });
                    }
                    mid += wdp * fdp * inner;
                }
            }
            outer.add(wd * fd * mid);
        }
    }
    outer.value()
}

/// `Δ(ℓ)` by 3-d graded quadrature, doubled until the relative change is
/// below [`DELTA_RTOL`]. For `|ℓ| ≥ 2` the result is checked against
/// `γF² (|ℓ|+1)^{-α} ≤ Δ(ℓ) ≤ γF² (|ℓ|-1)^{-α}`.
pub fn delta_ell<W: PairWeight + ?Sized>(ell: i64, alpha1: f64, alpha2: f64, f: &W) -> Result<f64> {
    check_alphas(alpha1, alpha2)?;
    let l = ell.unsigned_abs() as f64;
    let what = format!("Delta({ell})");
    let k = worst_exponent(alpha1, alpha2, f);
    let v = converge(&what, |n| delta_near(l, alpha1, alpha2, f, &GradedRule::for_exponent(n, k)))?;
    if ell.unsigned_abs() >= 2 {
        check_envelope(ell, v, alpha1 + alpha2, weight_mass(f)?, &what)?;
    }
    Ok(v)
}

fn worst_exponent<W: PairWeight + ?Sized>(alpha1: f64, alpha2: f64, f: &W) -> f64 {
    alpha1.max(alpha2).max(f.singular_exponent())
}

fn check_envelope(ell: i64, v: f64, alpha: f64, gf: f64, what: &str) -> Result<()> {
    let l = ell.unsigned_abs() as f64;
    let lo = gf * gf * (l + 1.0).powf(-alpha);
    let hi = gf * gf * (l - 1.0).powf(-alpha);
    let slack = 10.0 * DELTA_RTOL;
    if v < lo * (1.0 - slack) || v > hi * (1.0 + slack) {
        return Err(Error::QuadratureConvergence {
            what: format!("{what} = {v} outside [{lo}, {hi}]"),
            rel_change: f64::NAN,
        });
    }
    Ok(())
}

// μ_{i,j} = ∫∫ U^i V^j F(U,V), i, j ≤ order.
fn weight_moments<W: PairWeight + ?Sized>(f: &W, order: u32, rule: &GradedRule) -> Vec<Vec<f64>> {
    let m = order as usize + 1;
    let poly = GaussLegendre::new(order as usize + 2).expect("valid degree");
    let nodes: Vec<(f64, f64)> = poly.as_node_weight_pairs().to_vec();
    let mut mu = vec![vec![0.0; m]; m];
    let mut upow = vec![0.0; m];
    let mut vpow = vec![0.0; m];
    for (lo, hi) in [(-1.0, 0.0), (0.0, 1.0)] {
        for (d, wd) in rule.mapped(lo, hi) {
            let fd = wd * f.profile(d);
            let (p1, p2) = v_range(d);
            let (c, h) = (0.5 * (p1 + p2), 0.5 * (p2 - p1));
            for &(x, wx) in &nodes {
                let v = c + h * x;
                let u = v + d;
                upow[0] = 1.0;
                vpow[0] = 1.0;
                for k in 1..m {
                    upow[k] = upow[k - 1] * u;
                    vpow[k] = vpow[k - 1] * v;
                }
                let w = fd * h * wx;
                for i in 0..m {
                    for j in 0..m - i {
                        mu[i][j] += w * upow[i] * vpow[j];
                    }
                }
            }
        }
    }
    mu
}

/// Memoized `Δ(ℓ)` for one `(α1, α2, F)`.
///
/// Lags below [`FAR_LAG`] come from [`delta_ell`]. Beyond, `|x + ℓ|^{-α}` is
/// expanded in powers of `x/ℓ` (`|x| < 1`), which turns `Δ(ℓ)` into a
/// combination of the moments of `F`; truncation error is below `8^{-20}`.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaTable {
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma_f: f64,
    near: Vec<f64>,
    // E[X^m Y^n] with X = U - U', Y = V - V' under F ⊗ F.
    #[serde(skip)]
    cross: Vec<Vec<f64>>,
}

impl DeltaTable {
    pub fn new<W: PairWeight + ?Sized>(alpha1: f64, alpha2: f64, f: &W) -> Result<Self> {
        check_alphas(alpha1, alpha2)?;
        let gamma_f = weight_mass(f)?;
        let kappa = worst_exponent(alpha1, alpha2, f);
        let near = (0..FAR_LAG as i64)
            .into_par_iter()
            .map(|l| {
                let v = converge(&format!("Delta({l})"), |n| {
                    delta_near(l as f64, alpha1, alpha2, f, &GradedRule::for_exponent(n, kappa))
                })?;
                if l >= 2 {
                    check_envelope(l, v, alpha1 + alpha2, gamma_f, &format!("Delta({l})"))?;
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;

        // Moments converge like the weight integral; a fixed generous rule is used
        // and checked against γF (the (0,0) moment).
        let rule = GradedRule::for_exponent(MAX_NODES, f.singular_exponent());
        let mu = weight_moments(f, FAR_ORDER, &rule);
        if relative_change(mu[0][0], gamma_f) > DELTA_RTOL {
            return Err(Error::QuadratureConvergence {
                what: "moments of F".into(),
                rel_change: relative_change(mu[0][0], gamma_f),
            });
        }
        let m = FAR_ORDER as usize + 1;
        let mut cross = vec![vec![0.0; m]; m];
        for mm in 0..m {
            for nn in 0..m - mm {
                let mut acc = CompensatedSum::new();
                for j in 0..=mm {
                    for k in 0..=nn {
                        let sign = if (mm - j + nn - k) % 2 == 0 { 1.0 } else { -1.0 };
                        acc.add(
                            sign * binomial(mm as u32, j as u32)
                                * binomial(nn as u32, k as u32)
                                * mu[j][k]
                                * mu[mm - j][nn - k],
                        );
                    }
                }
                cross[mm][nn] = acc.value();
            }
        }
        Ok(Self {
            alpha1,
            alpha2,
            gamma_f,
            near,
            cross,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha1 + self.alpha2
    }

    pub fn delta(&self, ell: i64) -> f64 {
        let l = ell.unsigned_abs();
        if l < FAR_LAG {
            return self.near[l as usize];
        }
        self.delta_far(l as f64)
    }

    fn delta_far(&self, l: f64) -> f64 {
        let m = FAR_ORDER as usize + 1;
        let mut acc = 0.0;
        // sum in order of decreasing magnitude, small terms first
        for total in (0..m).rev() {
            let scale = l.powi(-(total as i32));
            for mm in 0..=total {
                let nn = total - mm;
                acc += binomial_real(-self.alpha1, mm as u32)
                    * binomial_real(-self.alpha2, nn as u32)
                    * scale
                    * self.cross[mm][nn];
            }
        }
        l.powf(-self.alpha()) * acc
    }

    /// `Σ_{i,j=0}^{N-1} Δ(i-j) = N [Δ(0) + 2 Σ_{ℓ=1}^{N-1} (1 - ℓ/N) Δ(ℓ)]`.
    pub fn sum_delta(&self, n: usize) -> f64 {
        let nf = n as f64;
        let mut acc = CompensatedSum::new();
        for l in (1..n).rev() {
            acc.add(2.0 * (1.0 - l as f64 / nf) * self.delta(l as i64));
        }
        acc.add(self.delta(0));
        nf * acc.value()
    }

    /// `N^{α-2} Σ_{i,j<N} Δ(i-j)`.
    pub fn normalized_sum(&self, n: usize) -> f64 {
        (n as f64).powf(self.alpha() - 2.0) * self.sum_delta(n)
    }

    pub fn limit(&self) -> Result<f64> {
        riemann_limit(self.alpha1, self.alpha2, self.gamma_f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chaos_like() -> SignPowerWeight {
        SignPowerWeight {
            below: 1.3,
            above: 0.8,
            kappa: 0.3,
        }
    }

    #[test]
    fn limit_examples() {
        assert!((riemann_limit(0.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((riemann_limit(0.3, 0.2, 1.0).unwrap() - 8.0 / 3.0).abs() < 1e-14);
        assert!(riemann_limit(0.6, 0.4, 1.0).is_err());
        assert!(riemann_limit(1.0, 0.0, 1.0).is_err());
        assert_eq!(
            riemann_asymptotics(0.5, 0.5, 1.0).unwrap(),
            RiemannAsymptotics::LinearBound { log_power: 1 }
        );
        assert_eq!(
            riemann_asymptotics(0.5, 0.6, 1.0).unwrap(),
            RiemannAsymptotics::LinearBound { log_power: 0 }
        );
    }

    #[test]
    fn constant_weight() {
        let one = ConstantWeight(1.0);
        assert!((delta_ell(0, 0.0, 0.0, &one).unwrap() - 1.0).abs() < 1e-10);
        let v = delta_ell(5, 0.2, 0.3, &one).unwrap();
        assert!(v >= 6f64.powf(-0.5) && v <= 4f64.powf(-0.5), "{v}");
        let t = DeltaTable::new(0.0, 0.0, &one).unwrap();
        assert!((t.normalized_sum(1000) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_weight_closed_form() {
        // With F ≡ 1 and α1 = 0, Δ(ℓ) = E|W + ℓ|^{-α2} for W triangular on (-1, 1).
        let one = ConstantWeight(1.0);
        let a: f64 = 0.4;
        // ∫_{-1}^{1} (1-|w|)|w|^{-a} dw = 2/((1-a)(2-a))
        let exact0 = 2.0 / ((1.0 - a) * (2.0 - a));
        let v = delta_ell(0, 0.0, a, &one).unwrap();
        assert!((v - exact0).abs() / exact0 < 1e-4, "{v} vs {exact0}");
        // ℓ = 1: ∫_{-1}^{1} (1-|w|)|w+1|^{-a} dw
        //      = ∫_0^1 x^{1-a} dx + ∫_1^2 (2-x) x^{-a} dx
        let g = |x: f64, p: f64| x.powf(p) / p;
        let exact1 = g(1.0, 2.0 - a) + 2.0 * (g(2.0, 1.0 - a) - g(1.0, 1.0 - a)) - (g(2.0, 2.0 - a) - g(1.0, 2.0 - a));
        let v = delta_ell(1, 0.0, a, &one).unwrap();
        assert!((v - exact1).abs() / exact1 < 1e-4, "{v} vs {exact1}");
    }

    #[test]
    fn symmetric_in_lag() {
        let f = chaos_like();
        for l in [1, 3] {
            let a = delta_ell(l, 0.2, 0.3, &f).unwrap();
            let b = delta_ell(-l, 0.2, 0.3, &f).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn weight_mass_closed_form() {
        let f = chaos_like();
        // ∫_{-1}^{1} c(d)|d|^{-κ}(1-|d|) dd = (below+above)/((1-κ)(2-κ))
        let k = f.kappa;
        let exact = (f.below + f.above) / ((1.0 - k) * (2.0 - k));
        let g = weight_mass(&f).unwrap();
        assert!((g - exact).abs() / exact < 1e-8, "{g} vs {exact}");
    }

    #[test]
    fn far_expansion_matches_quadrature() {
        let f = chaos_like();
        let t = DeltaTable::new(0.2, 0.3, &f).unwrap();
        for l in [8i64, 11] {
            let q = delta_ell(l, 0.2, 0.3, &f).unwrap();
            let e = t.delta(l);
            assert!((q - e).abs() / q < 1e-5, "l={l}: {q} vs {e}");
        }
        for l in 2..40 {
            let v = t.delta(l);
            let g2 = t.gamma_f * t.gamma_f;
            assert!(v >= g2 * ((l + 1) as f64).powf(-0.5) && v <= g2 * ((l - 1) as f64).powf(-0.5));
        }
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(delta_ell(0, 1.0, 0.0, &ConstantWeight(1.0)).is_err());
        assert!(DeltaTable::new(-0.1, 0.0, &ConstantWeight(1.0)).is_err());
    }
}
