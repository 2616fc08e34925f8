//! Centered quadratic variation of a path pair and its three-term split.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermpath::{PathPair, SamplePath};
use crate::model::ScaleSchedule;
use crate::numeric::CompensatedSum;

/// `γ_N = c·N^ρ`.
pub fn gamma_of(schedule: &ScaleSchedule, n: usize) -> Result<f64> {
    schedule.validate()?;
    if n == 0 {
        return Err(Error::Domain("N must be at least 1".into()));
    }
    Ok(schedule.gamma(n))
}

/// `Σ_i (ΔZ_i² - γ^{2H})`, centered by the exact increment variance.
pub fn qv_centered(path: &SamplePath, h: f64) -> Result<f64> {
    let g = path.spacing()?;
    let centre = g.powf(2.0 * h);
    Ok(path
        .values
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            d * d - centre
        })
        .collect::<CompensatedSum>()
        .value())
}

/// Quadratic covariation `Σ_i ΔZ¹_i ΔZ²_i`; mean zero, so no centering.
pub fn qv_cross(pair: &PathPair) -> Result<f64> {
    pair.spacing()?;
    let (a, b) = (&pair.component1.values, &pair.component2.values);
    Ok(a.windows(2)
        .zip(b.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[1] - y[0]))
        .collect::<CompensatedSum>()
        .value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QVDecomposition {
    #[serde(rename = "N")]
    pub n: usize,
    pub gamma: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "V1")]
    pub v1: f64,
    #[serde(rename = "V2")]
    pub v2: f64,
    #[serde(rename = "V3")]
    pub v3: f64,
}

impl QVDecomposition {
    /// Multiplies (V1, V2, V3) by (γ^{2H1}, γ^{2H2}, γ^{H1+H2}) as a unit-spacing
    /// decomposition would change under rescaling by γ.
    pub fn rescaled(&self, gamma: f64, h1: f64, h2: f64) -> Self {
        let v1 = self.v1 * gamma.powf(2.0 * h1);
        let v2 = self.v2 * gamma.powf(2.0 * h2);
        let v3 = self.v3 * gamma.powf(h1 + h2);
        Self {
            n: self.n,
            gamma: self.gamma * gamma,
            v: v1 + v2 + 2.0 * v3,
            v1,
            v2,
            v3,
        }
    }
}

/// `V = V1 + V2 + 2V3`, with each component centered by its own `γ^{2H}`.
pub fn qv_decompose(pair: &PathPair) -> Result<QVDecomposition> {
    let gamma = pair.spacing()?;
    let v1 = qv_centered(&pair.component1, pair.component1.meta.h)?;
    let v2 = qv_centered(&pair.component2, pair.component2.meta.h)?;
    let v3 = qv_cross(pair)?;
    Ok(QVDecomposition {
        n: pair.component1.steps(),
        gamma,
        v: v1 + v2 + 2.0 * v3,
        v1,
        v2,
        v3,
    })
}

pub fn write_qv_csv<W: Write>(mut w: W, rows: &[(usize, QVDecomposition)]) -> std::io::Result<()> {
    writeln!(w, "rep,N,gamma,V,V1,V2,V3")?;
    for (rep, d) in rows {
        writeln!(w, "{rep},{},{},{},{},{},{}", d.n, d.gamma, d.v, d.v1, d.v2, d.v3)?;
    }
    Ok(())
}
