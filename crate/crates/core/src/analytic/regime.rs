use serde::Serialize;

use crate::error::{domain, Result};
use crate::model::{check_order, Dependence, PairSpec, ScaleSchedule};

use super::exponents::{exponents, EXPONENT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dominant {
    V1,
    V3,
    V2,
    #[serde(rename = "boundary")]
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family")]
pub enum LimitLaw {
    Gaussian,
    Rosenblatt { index: f64 },
    #[serde(rename = "indeterminate")]
    Indeterminate,
}

impl LimitLaw {
    pub fn is_gaussian(&self) -> bool {
        matches!(self, LimitLaw::Gaussian)
    }
}

/// `σ_N ~ N^{exponent_n} γ_N^{exponent_gamma} (log N)^{log_half_power / 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub exponent_n: f64,
    pub exponent_gamma: f64,
    pub log_half_power: u8,
}

impl Rate {
    /// Slope of log σ_N against log N when `γ_N ∝ N^ρ`.
    pub fn folded_slope(&self, rho: f64) -> f64 {
        self.exponent_n + rho * self.exponent_gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub nu1: f64,
    pub nu2: f64,
    pub delta: u8,
    pub h1: f64,
    pub dominant: Dominant,
    pub limit_law: LimitLaw,
    pub rate: Rate,
}

/// Rates of the three terms of the decomposition for a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermRates {
    pub v1: Rate,
    pub v2: Rate,
    pub v3: Rate,
}

pub fn term_rates(q: u32, h1: f64, h2: f64) -> Result<TermRates> {
    let e = exponents(q, h1, h2)?;
    let q1 = f64::from(q) + 1.0;
    Ok(TermRates {
        v1: Rate {
            exponent_n: e.h1,
            exponent_gamma: 2.0 * h1,
            log_half_power: e.delta,
        },
        v2: Rate {
            exponent_n: 1.0 - 2.0 * (1.0 - h2) / q1,
            exponent_gamma: 2.0 * h2,
            log_half_power: 0,
        },
        v3: Rate {
            exponent_n: 1.0 - (1.0 - h2) / q1,
            exponent_gamma: h1 + h2,
            log_half_power: 0,
        },
    })
}

/// Limit law of the normalized `V^{(1)}`.
pub fn v1_limit_law(q: u32, h1: f64) -> LimitLaw {
    if q == 1 && h1 <= 0.75 + EXPONENT_TOL {
        LimitLaw::Gaussian
    } else {
        LimitLaw::Rosenblatt {
            index: 1.0 - 2.0 * (1.0 - h1) / f64::from(q),
        }
    }
}

pub fn v2_limit_law(q: u32, h2: f64) -> LimitLaw {
    LimitLaw::Rosenblatt {
        index: 1.0 - 2.0 * (1.0 - h2) / (f64::from(q) + 1.0),
    }
}

/// Which term of `V = V1 + V2 + 2 V3` dominates for `γ_N = c N^ρ`.
///
/// Only the exponent ρ matters. Exact ties are reported as `Boundary` except
/// when the `(log N)^{1/2}` factor of `V1` breaks the tie.
pub fn classify_regime(spec: &PairSpec, schedule: &ScaleSchedule) -> Result<RegimeReport> {
    spec.validate()?;
    schedule.validate()?;
    let PairSpec { q, h1, h2, .. } = *spec;
    let e = exponents(q, h1, h2)?;
    let rates = term_rates(q, h1, h2)?;
    let rho = schedule.exponent();
    let x = rho * (h2 - h1);
    let tie = |a: f64, b: f64| (a - b).abs() < EXPONENT_TOL;

    let dominant = match spec.dependence {
        Dependence::Dependent => {
            if tie(x, e.nu1) {
                if e.delta == 1 {
                    Dominant::V1
                } else {
                    Dominant::Boundary
                }
            } else if tie(x, e.nu2) {
                Dominant::Boundary
            } else if x < e.nu1 {
                Dominant::V1
            } else if x < e.nu2 {
                Dominant::V3
            } else {
                Dominant::V2
            }
        }
        Dependence::Independent => {
            let t = e.nu1 + e.nu2;
            if tie(2.0 * x, t) {
                if e.delta == 1 {
                    Dominant::V1
                } else {
                    Dominant::Boundary
                }
            } else if 2.0 * x < t {
                Dominant::V1
            } else {
                Dominant::V2
            }
        }
    };

    let (limit_law, rate) = match dominant {
        Dominant::V1 => (v1_limit_law(q, h1), rates.v1),
        Dominant::V2 => (v2_limit_law(q, h2), rates.v2),
        Dominant::V3 => (LimitLaw::Gaussian, rates.v3),
        Dominant::Boundary => {
            let rate = match spec.dependence {
                Dependence::Dependent => rates.v3,
                Dependence::Independent => rates.v1,
            };
            (LimitLaw::Indeterminate, rate)
        }
    };

    Ok(RegimeReport {
        nu1: e.nu1,
        nu2: e.nu2,
        delta: e.delta,
        h1: e.h1,
        dominant,
        limit_law,
        rate,
    })
}

fn boundary_formula(q: u32, mode: Dependence, h1: f64) -> f64 {
    let qf = f64::from(q);
    match mode {
        Dependence::Dependent => 1.0 - 2.0 * (qf + 1.0) * (1.0 - h1) / qf,
        Dependence::Independent => 1.0 - (qf + 1.0) * (1.0 - h1) / qf,
    }
}

/// `H2` on the line where `ν1 = 0` (dependent) or `ν1 + ν2 = 0` (independent),
/// or `None` when that value falls outside (1/2, 1).
pub fn boundary_curve(q: u32, mode: Dependence, h1: f64) -> Option<f64> {
    if q == 0 || !(h1 > 0.5 && h1 < 1.0) {
        return None;
    }
    let h2 = boundary_formula(q, mode, h1);
    (h2 > 0.5 && h2 < 1.0).then_some(h2)
}

/// `H1` at which the boundary line meets `H2 = 1/2`.
pub fn boundary_left_endpoint(q: u32, mode: Dependence) -> f64 {
    let qf = f64::from(q);
    match mode {
        Dependence::Dependent => 1.0 - qf / (4.0 * (qf + 1.0)),
        Dependence::Independent => 1.0 - qf / (2.0 * (qf + 1.0)),
    }
}

/// `points` equally spaced samples of the boundary segment, from its left
/// endpoint on `H2 = 1/2` to `(1, 1)`, both included.
pub fn boundary_segment(q: u32, mode: Dependence, points: usize) -> Result<Vec<(f64, f64)>> {
    check_order(q)?;
    if points < 2 {
        return domain("a boundary segment needs at least 2 points");
    }
    let x0 = boundary_left_endpoint(q, mode);
    Ok((0..points)
        .map(|i| {
            let h1 = x0 + (1.0 - x0) * i as f64 / (points - 1) as f64;
            (h1, boundary_formula(q, mode, h1))
        })
        .collect())
}
