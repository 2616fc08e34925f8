//! The parameter objects every experiment is built from.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hermpath::constraint_h2;

/// Tolerance used when testing whether (H1, H2) lies on the subordination line.
pub const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dependence {
    /// Both components are driven by the same Brownian motion.
    Dependent,
    /// The order-(q+1) component is an independent copy.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// One long-memory Gaussian sequence, Hermite polynomials of orders q and q+1.
    Subordinated,
    /// Discretised Wiener–Itô kernels on a shared white-noise grid (q = 1 only).
    KernelGrid,
    /// Two independent drivers.
    IndependentDrivers,
}

/// The mixed model `Z = Z^{H1,q} + Z^{H2,q+1}`.
///
/// `coupling` is optional: a spec without one can be classified but not simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub q: u32,
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H2")]
    pub h2: f64,
    pub dependence: Dependence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Coupling>,
}

pub(crate) fn check_hurst(name: &str, h: f64) -> Result<()> {
    if h.is_finite() && h > 0.5 && h < 1.0 {
        Ok(())
    } else {
        domain(format!("{name} = {h} must lie in (1/2, 1)"))
    }
}

pub(crate) fn check_order(q: u32) -> Result<()> {
    if q >= 1 {
        Ok(())
    } else {
        domain("q must be >= 1")
    }
}

impl PairSpec {
    pub fn new(q: u32, h1: f64, h2: f64, dependence: Dependence, coupling: Option<Coupling>) -> Result<Self> {
        let spec = Self {
            q,
            h1,
            h2,
            dependence,
            coupling,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A spec for the analytic layer only.
    pub fn analytic(q: u32, h1: f64, h2: f64, dependence: Dependence) -> Result<Self> {
        Self::new(q, h1, h2, dependence, None)
    }

    /// Dependent pair on the subordination line `H2 = 1 - (q+1)(1-H1)/q`.
    pub fn subordinated(q: u32, h1: f64) -> Result<Self> {
        let h2 = constraint_h2(q, h1)?;
        Self::new(q, h1, h2, Dependence::Dependent, Some(Coupling::Subordinated))
    }

    pub fn kernel_grid(h1: f64, h2: f64) -> Result<Self> {
        Self::new(1, h1, h2, Dependence::Dependent, Some(Coupling::KernelGrid))
    }

    pub fn independent(q: u32, h1: f64, h2: f64) -> Result<Self> {
        Self::new(q, h1, h2, Dependence::Independent, Some(Coupling::IndependentDrivers))
    }

    pub fn validate(&self) -> Result<()> {
        check_order(self.q)?;
        check_hurst("H1", self.h1)?;
        check_hurst("H2", self.h2)?;
        match (self.coupling, self.dependence) {
            (None, _) => Ok(()),
            (Some(Coupling::Subordinated), Dependence::Dependent) => {
                let line = 1.0 - f64::from(self.q + 1) * (1.0 - self.h1) / f64::from(self.q);
                if (line - self.h2).abs() > CONSTRAINT_TOL {
                    return Err(Error::Constraint(format!(
                        "subordinated coupling needs H2 = 1-(q+1)(1-H1)/q = {line}, got {}",
                        self.h2
                    )));
                }
                Ok(())
            }
            (Some(Coupling::KernelGrid), Dependence::Dependent) => {
                if self.q == 1 {
                    Ok(())
                } else {
                    Err(Error::Constraint("kernel-grid coupling is only available for q = 1".into()))
                }
            }
            (Some(Coupling::IndependentDrivers), Dependence::Independent) => Ok(()),
            (Some(c), d) => Err(Error::Constraint(format!(
                "coupling {c:?} is incompatible with dependence {d:?}"
            ))),
        }
    }

    pub fn coupling(&self) -> Result<Coupling> {
        self.coupling
            .ok_or_else(|| Error::Config("the pair spec has no coupling; it cannot be simulated".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Fixed,
    Power,
}

/// Interspacing rule `γ_N = c · N^ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub kind: ScheduleKind,
    pub c: f64,
    #[serde(default)]
    pub rho: f64,
}

impl ScaleSchedule {
    pub fn fixed(c: f64) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::Fixed,
            c,
            rho: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn power(c: f64, rho: f64) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::Power,
            c,
            rho,
        };
        s.validate()?;
        Ok(s)
    }

    /// `γ_N = 1/N`.
    pub fn in_fill() -> Self {
        Self {
            kind: ScheduleKind::Power,
            c: 1.0,
            rho: -1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return domain(format!("schedule constant c = {} must be positive", self.c));
        }
        if !self.rho.is_finite() {
            return domain("schedule exponent rho must be finite");
        }
        if self.kind == ScheduleKind::Fixed && self.rho != 0.0 {
            return domain("a fixed schedule has rho = 0");
        }
        Ok(())
    }

    /// Exponent of N in γ_N (0 for fixed schedules).
    pub fn exponent(&self) -> f64 {
        match self.kind {
            ScheduleKind::Fixed => 0.0,
            ScheduleKind::Power => self.rho,
        }
    }

    pub fn gamma(&self, n: usize) -> f64 {
        self.c * (n as f64).powf(self.exponent())
    }
}
