use crate::error::{domain, Result};
use crate::numeric::CompensatedSum;

use super::special::binomial_real;

/// Largest N accepted by the exact double sums.
pub const MAX_EXACT_N: usize = 1_000_000;

// Beyond this lag the second-difference form is replaced by its series.
const SERIES_LAG: u64 = 8;
const SERIES_TERMS: u32 = 12;

fn check_index(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        domain(format!("Hurst index {h} must lie in (0, 1)"))
    }
}

/// Autocovariance of unit-variance fractional Gaussian noise,
/// `r(k) = ½(|k+1|^{2h} + |k-1|^{2h} - 2|k|^{2h})`.
///
/// For large lags the expression is a second difference of nearly equal
/// numbers; there `r(k) = k^{2h} Σ_m C(2h, 2m) k^{-2m}` is used instead.
pub fn fgn_autocov(h: f64, k: i64) -> f64 {
    let k = k.unsigned_abs();
    let e = 2.0 * h;
    if k == 0 {
        return 1.0;
    }
    if k < SERIES_LAG {
        let kf = k as f64;
        let s: CompensatedSum = [(kf + 1.0).powf(e), (kf - 1.0).powf(e), -2.0 * kf.powf(e)]
            .into_iter()
            .collect();
        return 0.5 * s.value();
    }
    let kf = k as f64;
    let inv2 = 1.0 / (kf * kf);
    let mut pow = inv2;
    let mut acc = 0.0;
    for m in 1..=SERIES_TERMS {
        acc += binomial_real(e, 2 * m) * pow;
        pow *= inv2;
    }
    kf.powf(e) * acc
}

/// `E[(Z_{t_{i+1}} - Z_{t_i})(Z_{t_{j+1}} - Z_{t_j})]` for `t_k = kγ`.
pub fn increment_cov(h: f64, gamma: f64, i: i64, j: i64) -> Result<f64> {
    check_index(h)?;
    if !(gamma > 0.0) {
        return domain("gamma must be positive");
    }
    Ok(gamma.powf(2.0 * h) * fgn_autocov(h, i - j))
}

// Σ_{i,j<N} f(i-j) = N f(0) + 2 Σ_{l=1}^{N-1} (N-l) f(l) for even f.
fn toeplitz_sum(n: usize, f: impl Fn(i64) -> f64) -> Result<f64> {
    if n == 0 || n > MAX_EXACT_N {
        return domain(format!("N = {n} must lie in [1, {MAX_EXACT_N}]"));
    }
    let mut acc = CompensatedSum::new();
    acc.add(n as f64 * f(0));
    for l in 1..n {
        acc.add(2.0 * (n - l) as f64 * f(l as i64));
    }
    Ok(acc.value())
}

/// `E[(Ṽ3_N)²]` for independent fBm components: `Σ_{i,j} γ_{i,j}(H1) γ_{i,j}(H2)`.
pub fn cross_variance_independent(h1: f64, h2: f64, gamma: f64, n: usize) -> Result<f64> {
    check_index(h1)?;
    check_index(h2)?;
    if !(gamma > 0.0) {
        return domain("gamma must be positive");
    }
    let s = toeplitz_sum(n, |l| fgn_autocov(h1, l) * fgn_autocov(h2, l))?;
    Ok(gamma.powf(2.0 * (h1 + h2)) * s)
}

/// `Var(V_N)` for fBm: `2 Σ_{i,j} γ_{i,j}(H)²`.
pub fn fbm_qv_variance(h: f64, gamma: f64, n: usize) -> Result<f64> {
    check_index(h)?;
    if !(gamma > 0.0) {
        return domain("gamma must be positive");
    }
    let s = toeplitz_sum(n, |l| fgn_autocov(h, l).powi(2))?;
    Ok(2.0 * gamma.powf(4.0 * h) * s)
}
