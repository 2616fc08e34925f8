use serde::Serialize;

use crate::error::{domain, Result};
use crate::model::{check_hurst, check_order};

/// Tolerance for exact-equality tests on exponents (δ, ties, boundary hits).
pub const EXPONENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    pub h1: f64,
    pub delta: u8,
    pub nu1: f64,
    pub nu2: f64,
    #[serde(rename = "H1_star")]
    pub h1_star: f64,
}

pub fn exponents(q: u32, h1: f64, h2: f64) -> Result<Exponents> {
    check_order(q)?;
    check_hurst("H1", h1)?;
    check_hurst("H2", h2)?;
    let qf = f64::from(q);
    let rank1 = 1.0 - 2.0 * (1.0 - h1) / qf;
    let delta = u8::from(q == 1 && (h1 - 0.75).abs() < EXPONENT_TOL);
    let nu2 = (1.0 - h2) / (qf + 1.0);
    let hh = rank1.max(0.5);
    Ok(Exponents {
        h1: hh,
        delta,
        nu1: nu2 - 1.0 + hh,
        nu2,
        h1_star: (1.0 - h1) / qf + nu2,
    })
}

/// `α(k) = 2(q-k)(1-H1)/q + 2(q+1-k)(1-H2)/(q+1)`.
pub fn alpha_k(q: u32, k: u32, h1: f64, h2: f64) -> Result<f64> {
    check_order(q)?;
    check_hurst("H1", h1)?;
    check_hurst("H2", h2)?;
    if k > q {
        return domain(format!("k = {k} must lie in [0, q = {q}]"));
    }
    let (qf, kf) = (f64::from(q), f64::from(k));
    Ok(2.0 * (qf - kf) * (1.0 - h1) / qf + 2.0 * (qf + 1.0 - kf) * (1.0 - h2) / (qf + 1.0))
}

/// `ε(α) = 1` if `α = 1`, else 0.
pub fn epsilon(alpha: f64) -> u8 {
    u8::from((alpha - 1.0).abs() < EXPONENT_TOL)
}
