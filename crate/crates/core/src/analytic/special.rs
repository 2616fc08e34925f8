use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::model::{check_hurst, check_order};

/// Euler beta function, through log-gamma.
pub fn beta(x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
        return domain(format!("beta({x}, {y}) needs positive arguments"));
    }
    Ok((ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)).exp())
}

fn check_beta_tilde_params(a: f64, b: f64) -> Result<()> {
    if a > -1.0 && b > -1.0 && a + b < -1.0 {
        Ok(())
    } else {
        domain(format!("beta_tilde needs a, b > -1 and a + b < -1, got a = {a}, b = {b}"))
    }
}

/// The two values `(β(a+1, -1-a-b), β(b+1, -1-a-b))` taken by `beta_tilde`
/// below and above the diagonal.
pub fn beta_tilde_pair(a: f64, b: f64) -> Result<(f64, f64)> {
    check_beta_tilde_params(a, b)?;
    let c = -1.0 - a - b;
    Ok((beta(a + 1.0, c)?, beta(b + 1.0, c)?))
}

/// `∫_{-∞}^{u∧v} (u-s)^a (v-s)^b ds = beta_tilde(a,b,u,v) |u-v|^{a+b+1}`.
pub fn beta_tilde(a: f64, b: f64, u: f64, v: f64) -> Result<f64> {
    let (below, above) = beta_tilde_pair(a, b)?;
    if u < v {
        Ok(below)
    } else if v < u {
        Ok(above)
    } else {
        Err(Error::SingularInput(u))
    }
}

pub fn beta_tilde_sup(a: f64, b: f64) -> Result<f64> {
    let (x, y) = beta_tilde_pair(a, b)?;
    Ok(x.max(y))
}

/// Kernel `(u-y)_+^a` of the Hermite process of order `q` and index `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelParams {
    pub q: u32,
    #[serde(rename = "H")]
    pub h: f64,
    pub a: f64,
}

impl KernelParams {
    pub fn new(q: u32, h: f64) -> Result<Self> {
        check_order(q)?;
        check_hurst("H", h)?;
        let a = -(0.5 + (1.0 - h) / f64::from(q));
        assert!(a > -1.0 && a < -0.5, "kernel exponent {a} out of (-1, -1/2)");
        Ok(Self { q, h, a })
    }

    /// `2a + 1 = -2(1-H)/q`.
    pub fn two_a_plus_one(&self) -> f64 {
        -2.0 * (1.0 - self.h) / f64::from(self.q)
    }

    /// `∫ (u-y)_+^a (v-y)_+^a dy = beta_diag · |u-v|^{2a+1}`.
    pub fn beta_diag(&self) -> f64 {
        beta(self.a + 1.0, -1.0 - 2.0 * self.a).expect("valid kernel exponent")
    }

    /// Squared L² norm of the kernel at t = 1 (without the normalizing constant).
    pub fn kernel_norm_sq(&self) -> f64 {
        self.beta_diag().powi(self.q as i32) / (self.h * (2.0 * self.h - 1.0))
    }
}

/// Normalizing constant `c(H, q)` making `E[Z_1²] = 1`.
pub fn norm_constant(q: u32, h: f64) -> Result<f64> {
    let k = KernelParams::new(q, h)?;
    let qf = factorial(q);
    Ok((qf * k.kernel_norm_sq()).powf(-0.5))
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * f64::from(n - i) / f64::from(i + 1);
    }
    acc.round()
}

/// Generalised binomial coefficient `C(x, m)` for real `x`.
pub fn binomial_real(x: f64, m: u32) -> f64 {
    let mut acc = 1.0;
    for j in 0..m {
        acc *= (x - f64::from(j)) / f64::from(j + 1);
    }
    acc
}
