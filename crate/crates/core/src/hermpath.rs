//! Sample paths of Hermite processes and of coupled pairs of consecutive orders.
//!
//! Everything is generated at unit spacing and moved to `t_i = γ·i` with
//! [`rescale_selfsimilar`]. Generators are built once per `(spec, N)` and then
//! sampled from keyed seed streams; [`PairGenerator::sample_two`] returns two
//! independent replications per call because the FFT work is shared.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::analytic::{binomial_real, factorial, fgn_autocov, norm_constant};
use crate::chaosor::hermite_pair;
use crate::error::{domain, Error, Result};
use crate::gaussgen::{build_sampler, AutocovModel, CirculantSampler};
use crate::model::{check_hurst, check_order, Coupling, PairSpec};
use crate::numeric::CompensatedSum;
use crate::seeds::{stream_rng, COMPONENT_PRIMARY, COMPONENT_SECONDARY};

pub const DEFAULT_N_INNER: usize = 256;
pub const MIN_N_INNER: usize = 64;
/// Allowed deviation of the kernel-grid variance at t = 1 before rescaling.
pub const GRID_VARIANCE_TOL: f64 = 0.05;

// far-field cells grow geometrically from the horizon out to FAR_EDGE
const FAR_RATIO: f64 = 1.1;
const FAR_EDGE: f64 = 1e12;
// second differences of x^p switch to their series beyond this lag
const SERIES_LAG: usize = 8;
const SERIES_TERMS: u32 = 12;

/// `H2 = 1 - (q+1)(1-H1)/q`, the index of `H_{q+1}(X)` partial sums when
/// `H_q(X)` partial sums have index `H1`.
pub fn constraint_h2(q: u32, h1: f64) -> Result<f64> {
    check_order(q)?;
    if !(h1.is_finite() && h1 < 1.0) {
        return domain(format!("H1 = {h1} must lie in (1/2, 1)"));
    }
    let h2 = 1.0 - f64::from(q + 1) * (1.0 - h1) / f64::from(q);
    if h2 > 0.5 {
        Ok(h2)
    } else {
        domain(format!(
            "H1 = {h1} gives H2 = {h2} <= 1/2; need H1 > {}",
            1.0 - f64::from(q) / (2.0 * f64::from(q + 1))
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMeta {
    pub generator: &'static str,
    pub order: u32,
    #[serde(rename = "H")]
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: PathMeta,
}

impl SamplePath {
    /// Path at `t = 0, 1, ..., N` from its partial sums (values[0] must be 0).
    fn unit(values: Vec<f64>, meta: PathMeta) -> Self {
        debug_assert_eq!(values[0], 0.0);
        let times = (0..values.len()).map(|i| i as f64).collect();
        Self { times, values, meta }
    }

    fn from_increments(inc: &[f64], scale: f64, meta: PathMeta) -> Self {
        let mut values = Vec::with_capacity(inc.len() + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for &x in inc {
            acc += x;
            values.push(acc * scale);
        }
        Self::unit(values, meta)
    }

    /// Number of steps N.
    pub fn steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Common spacing γ if `times` is `0, γ, 2γ, ...` (relative tolerance 1e-9).
    pub fn spacing(&self) -> Result<f64> {
        if self.times.len() != self.values.len() || self.times.len() < 2 {
            return Err(Error::GridMismatch("a path needs matching times and at least two points".into()));
        }
        if self.times[0] != 0.0 {
            return Err(Error::GridMismatch(format!("grid starts at {}, not 0", self.times[0])));
        }
        let g = self.times[1];
        if !(g > 0.0) {
            return Err(Error::GridMismatch("non-increasing time grid".into()));
        }
        for (i, &t) in self.times.iter().enumerate() {
            let want = g * i as f64;
            if (t - want).abs() > 1e-9 * want.max(g) {
                return Err(Error::GridMismatch(format!("t[{i}] = {t}, expected {want}")));
            }
        }
        Ok(g)
    }

    fn rescaled(&self, gamma: f64, h: f64) -> Self {
        let s = gamma.powf(h);
        Self {
            times: self.times.iter().map(|t| t * gamma).collect(),
            values: self.values.iter().map(|v| v * s).collect(),
            meta: self.meta.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub component1: SamplePath,
    pub component2: SamplePath,
    pub coupling: Coupling,
}

impl PathPair {
    /// Shared spacing γ of both components.
    pub fn spacing(&self) -> Result<f64> {
        let g = self.component1.spacing()?;
        let g2 = self.component2.spacing()?;
        if self.component1.times.len() != self.component2.times.len() || (g - g2).abs() > 1e-12 * g {
            return Err(Error::GridMismatch("components are on different grids".into()));
        }
        Ok(g)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,z1,z2")?;
        for ((t, a), b) in self
            .component1
            .times
            .iter()
            .zip(&self.component1.values)
            .zip(&self.component2.values)
        {
            writeln!(w, "{t},{a},{b}")?;
        }
        Ok(())
    }
}

/// Multiplies component values by `γ^{H1}`, `γ^{H2}` and moves the grid to `γ·i`.
pub fn rescale_selfsimilar(pair: &PathPair, gamma: f64, h1: f64, h2: f64) -> Result<PathPair> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return domain(format!("gamma = {gamma} must be positive"));
    }
    Ok(PathPair {
        component1: pair.component1.rescaled(gamma, h1),
        component2: pair.component2.rescaled(gamma, h2),
        coupling: pair.coupling,
    })
}

/// White-noise grid of the kernel method: step `Δ = 1/cells_per_unit` and
/// left truncation `horizon` (M). Noise beyond the horizon is carried by a
/// coarse geometric grid, so M only sets where the fine grid stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub cells_per_unit: usize,
    pub horizon: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            cells_per_unit: 64,
            horizon: 32,
        }
    }
}

impl GridSpec {
    pub fn new(cells_per_unit: usize, horizon: usize) -> Result<Self> {
        let g = Self {
            cells_per_unit,
            horizon,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells_per_unit == 0 || self.horizon == 0 {
            return domain("grid needs at least one cell per unit and a positive horizon");
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        1.0 / self.cells_per_unit as f64
    }

    /// Fine cells covering `[-M, t_max]`.
    pub fn cells(&self, t_max: usize) -> usize {
        (self.horizon + t_max) * self.cells_per_unit
    }
}

/// Options shared by all generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub n_inner: usize,
    pub grid: GridSpec,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            n_inner: DEFAULT_N_INNER,
            grid: GridSpec::default(),
        }
    }
}

/// `Var(Σ_{i<n} H_j(X_i)) = j! Σ_{|k|<n} (n-|k|) r(k)^j` for fGn `X` of index `h`.
fn hermite_sum_variance(h: f64, order: u32, n: usize) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    acc.add(n as f64);
    for k in 1..n {
        acc.add(2.0 * (n - k) as f64 * fgn_autocov(h, k as i64).powi(order as i32));
    }
    let v = factorial(order) * acc.value();
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Calibration(format!(
            "variance of the order-{order} block sum is {v}"
        )))
    }
}

/// Index of the driving fGn for a Hermite process of `order` and index `h`.
fn driver_index(order: u32, h: f64) -> f64 {
    1.0 - (1.0 - h) / f64::from(order)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        domain("N must be at least 1")
    } else {
        Ok(())
    }
}

fn check_inner(n_inner: usize) -> Result<()> {
    if n_inner < MIN_N_INNER {
        domain(format!("n_inner = {n_inner} must be at least {MIN_N_INNER}"))
    } else {
        Ok(())
    }
}

// Block partial sums of H_q(x) and H_{q+1}(x), divided by s1 and s2.
fn hermite_block_sums(x: &[f64], q: u32, n_inner: usize, s1: f64, s2: f64) -> (Vec<f64>, Vec<f64>) {
    let blocks = x.len() / n_inner;
    let mut z1 = Vec::with_capacity(blocks + 1);
    let mut z2 = Vec::with_capacity(blocks + 1);
    z1.push(0.0);
    z2.push(0.0);
    let (mut a, mut b) = (0.0, 0.0);
    for chunk in x.chunks_exact(n_inner) {
        for &v in chunk {
            let (hq, hq1) = hermite_pair(q, v);
            a += hq;
            b += hq1;
        }
        z1.push(a / s1);
        z2.push(b / s2);
    }
    (z1, z2)
}

#[derive(Debug, Clone)]
struct Subordinated {
    q: u32,
    h1: f64,
    h2: f64,
    n_inner: usize,
    sampler: CirculantSampler,
    s1: f64,
    s2: f64,
}

impl Subordinated {
    fn new(q: u32, h1: f64, n: usize, n_inner: usize) -> Result<Self> {
        check_hurst("H1", h1)?;
        let h2 = constraint_h2(q, h1)?;
        check_n(n)?;
        check_inner(n_inner)?;
        let h = driver_index(q, h1);
        let sampler = build_sampler(AutocovModel::fgn(h)?, n * n_inner)?;
        let s1 = hermite_sum_variance(h, q, n_inner)?.sqrt();
        let s2 = hermite_sum_variance(h, q + 1, n_inner)?.sqrt();
        Ok(Self {
            q,
            h1,
            h2,
            n_inner,
            sampler,
            s1,
            s2,
        })
    }

    fn pair(&self, x: &[f64]) -> PathPair {
        let (z1, z2) = hermite_block_sums(x, self.q, self.n_inner, self.s1, self.s2);
        let meta = |order, h| PathMeta {
            generator: "subordinated",
            order,
            h,
        };
        PathPair {
            component1: SamplePath::unit(z1, meta(self.q, self.h1)),
            component2: SamplePath::unit(z2, meta(self.q + 1, self.h2)),
            coupling: Coupling::Subordinated,
        }
    }

    fn sample_two(&self, key: &[u64]) -> [PathPair; 2] {
        let (a, b) = self.sampler.sample_pair_with(&mut stream_rng(key));
        [self.pair(&a), self.pair(&b)]
    }
}

/// A single Hermite process: exact fBm for order 1, subordination otherwise.
#[derive(Debug, Clone)]
enum Single {
    Fbm {
        h: f64,
        sampler: CirculantSampler,
    },
    Hermite {
        order: u32,
        h: f64,
        n_inner: usize,
        sampler: CirculantSampler,
        s: f64,
    },
}

impl Single {
    fn new(order: u32, h: f64, n: usize, n_inner: usize) -> Result<Self> {
        check_order(order)?;
        check_hurst("H", h)?;
        check_n(n)?;
        if order == 1 {
            return Ok(Single::Fbm {
                h,
                sampler: build_sampler(AutocovModel::fgn(h)?, n)?,
            });
        }
        check_inner(n_inner)?;
        let hx = driver_index(order, h);
        Ok(Single::Hermite {
            order,
            h,
            n_inner,
            sampler: build_sampler(AutocovModel::fgn(hx)?, n * n_inner)?,
            s: hermite_sum_variance(hx, order, n_inner)?.sqrt(),
        })
    }

    fn path(&self, x: &[f64]) -> SamplePath {
        match self {
            Single::Fbm { h, .. } => SamplePath::from_increments(
                x,
                1.0,
                PathMeta {
                    generator: "fbm",
                    order: 1,
                    h: *h,
                },
            ),
            Single::Hermite {
                order, h, n_inner, s, ..
            } => {
                let mut values = Vec::with_capacity(x.len() / n_inner + 1);
                values.push(0.0);
                let mut acc = 0.0;
                for chunk in x.chunks_exact(*n_inner) {
                    acc += chunk.iter().map(|&v| hermite_pair(*order, v).0).sum::<f64>();
                    values.push(acc / s);
                }
                SamplePath::unit(
                    values,
                    PathMeta {
                        generator: "subordinated",
                        order: *order,
                        h: *h,
                    },
                )
            }
        }
    }

    fn sample_two(&self, key: &[u64]) -> [SamplePath; 2] {
        let sampler = match self {
            Single::Fbm { sampler, .. } | Single::Hermite { sampler, .. } => sampler,
        };
        let (a, b) = sampler.sample_pair_with(&mut stream_rng(key));
        [self.path(&a), self.path(&b)]
    }
}

/// Exact fBm at unit spacing for any `H` in (0, 1).
#[derive(Debug, Clone)]
pub struct FbmGenerator(Single);

impl FbmGenerator {
    pub fn new(h: f64, n: usize) -> Result<Self> {
        check_n(n)?;
        let sampler = build_sampler(AutocovModel::fgn(h)?, n)?;
        Ok(Self(Single::Fbm { h, sampler }))
    }

    pub fn sample_two(&self, key: &[u64]) -> [SamplePath; 2] {
        self.0.sample_two(key)
    }
}

/// Exact fBm at `t_i = γ·i`: cumulative sums of exact fGn, scaled by `γ^H`.
pub fn simulate_fbm(h: f64, n: usize, gamma: f64, seed: u64) -> Result<SamplePath> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return domain(format!("gamma = {gamma} must be positive"));
    }
    let [p, _] = FbmGenerator::new(h, n)?.sample_two(&[seed]);
    Ok(p.rescaled(gamma, h))
}

/// Dependent pair on the constraint line from one long-memory sequence.
pub fn simulate_pair_subordinated(q: u32, h1: f64, n: usize, n_inner: usize, seed: u64) -> Result<PathPair> {
    let [p, _] = Subordinated::new(q, h1, n, n_inner)?.sample_two(&[seed]);
    Ok(p)
}

/// Pair with independent drivers, rescaled to spacing γ.
pub fn simulate_pair_independent(q: u32, h1: f64, h2: f64, n: usize, gamma: f64, seed: u64) -> Result<PathPair> {
    let spec = PairSpec::independent(q, h1, h2)?;
    let g = PairGenerator::new(&spec, n, &SimOptions::default())?;
    let [p, _] = g.sample_two(&[seed]);
    rescale_selfsimilar(&p, gamma, h1, h2)
}

/// q = 1 dependent pair at arbitrary (H1, H2) on a shared white-noise grid.
pub fn simulate_pair_kernel(h1: f64, h2: f64, n: usize, grid: GridSpec, seed: u64) -> Result<PathPair> {
    let [p, _] = KernelGrid::new(h1, h2, n, grid)?.sample_two(&[seed]);
    Ok(p)
}

/// `∫_0^1∫_0^1 (d + s - r)_+^a dr ds`, the cell-to-cell double integral of the
/// kernel at lag `d` (in cells, unit cell width).
fn cell_weight(a: f64, d: usize) -> f64 {
    let p = a + 2.0;
    let norm = (a + 1.0) * (a + 2.0);
    if d < SERIES_LAG {
        let phi = |x: f64| if x > 0.0 { x.powf(p) } else { 0.0 };
        let x = d as f64;
        let s: CompensatedSum = [phi(x + 1.0), -2.0 * phi(x), phi(x - 1.0)].into_iter().collect();
        return s.value() / norm;
    }
    let x = d as f64;
    let inv2 = 1.0 / (x * x);
    let mut pow = inv2;
    let mut acc = 0.0;
    for m in 1..=SERIES_TERMS {
        acc += binomial_real(p, 2 * m) * pow;
        pow *= inv2;
    }
    2.0 * x.powf(p) * acc / norm
}

/// Kernel-grid generator for the q = 1 pair (fBm, Rosenblatt).
///
/// Fine cells of width Δ cover `[-M, N]`; cell noise `B_c ~ N(0, Δ)`. The
/// cell-averaged field of exponent `a` at u-cell `k` is
/// `G(k) = Δ^a Σ_c I(k - c) B_c` with `I` the exact cell double integral.
/// Beyond `-M` the noise lives on geometric cells out to 1e12 and a tail term.
/// Component 1 is `Σ_k Δ G₁(k)`, component 2 is `Σ_k Δ (G₂(k)² - diagonal)`,
/// both rescaled by their exact discrete variance at t = 1.
pub struct KernelGrid {
    h1: f64,
    h2: f64,
    n: usize,
    k: usize,
    offset: usize,
    cells: usize,
    size: usize,
    spec_w1: Vec<Complex64>,
    spec_w2: Vec<Complex64>,
    spec_w2sq: Vec<Complex64>,
    // far loadings per standard normal, laid out [u][cell] for u = 0..=N
    far1: Vec<f64>,
    far2: Vec<f64>,
    far_cells: usize,
    // tail Cholesky factor: field1 = l11 t1, field2 = l21 t1 + l22 t2
    tail: [f64; 3],
    // E[far2(u)²] and E[far2(u) far2(u+1)]
    far_var: Vec<f64>,
    far_cov: Vec<f64>,
    scale1: f64,
    scale2: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for KernelGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelGrid")
            .field("h1", &self.h1)
            .field("h2", &self.h2)
            .field("n", &self.n)
            .field("cells", &self.cells)
            .field("far_cells", &self.far_cells)
            .finish()
    }
}

/// Variances at t = 1 of the two components before rescaling, in units of
/// the target variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridDiagnostics {
    pub variance1: f64,
    pub variance2: f64,
}

fn far_edges(horizon: f64) -> Vec<f64> {
    let mut e = vec![horizon];
    while *e.last().unwrap() < FAR_EDGE {
        let next = e.last().unwrap() * FAR_RATIO;
        e.push(next.min(FAR_EDGE));
    }
    e
}

impl KernelGrid {
    pub fn new(h1: f64, h2: f64, n: usize, grid: GridSpec) -> Result<Self> {
        let (g, _) = Self::build(h1, h2, n, grid)?;
        Ok(g)
    }

    /// The t = 1 variances (times `c(H,q)²`) that the rescaling removes.
    pub fn diagnostics(h1: f64, h2: f64, grid: GridSpec) -> Result<GridDiagnostics> {
        Self::unchecked(h1, h2, 1, grid).map(|(_, d)| d)
    }

    fn build(h1: f64, h2: f64, n: usize, grid: GridSpec) -> Result<(Self, GridDiagnostics)> {
        let (g, d) = Self::unchecked(h1, h2, n, grid)?;
        for (component, v) in [("component1", d.variance1), ("component2", d.variance2)] {
            if (v - 1.0).abs() > GRID_VARIANCE_TOL {
                return Err(Error::GridTooCoarse { component, variance: v });
            }
        }
        Ok((g, d))
    }

    fn unchecked(h1: f64, h2: f64, n: usize, grid: GridSpec) -> Result<(Self, GridDiagnostics)> {
        check_hurst("H1", h1)?;
        check_hurst("H2", h2)?;
        check_n(n)?;
        grid.validate()?;
        let a1 = h1 - 1.5;
        let a2 = -(0.5 + (1.0 - h2) / 2.0);
        let k = grid.cells_per_unit;
        let dx = grid.step();
        let offset = grid.horizon * k;
        let cells = grid.cells(n);
        let size = (2 * cells).next_power_of_two();

        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);

        let w1: Vec<f64> = (0..cells).map(|d| dx.powf(a1) * cell_weight(a1, d)).collect();
        let w2: Vec<f64> = (0..cells).map(|d| dx.powf(a2) * cell_weight(a2, d)).collect();
        let spectrum = |w: &mut dyn Iterator<Item = f64>| {
            let mut buf = vec![Complex64::new(0.0, 0.0); size];
            for (b, x) in buf.iter_mut().zip(w) {
                b.re = x;
            }
            fwd.process(&mut buf);
            buf
        };
        let spec_w1 = spectrum(&mut w1.iter().copied());
        let spec_w2 = spectrum(&mut w2.iter().copied());
        let spec_w2sq = spectrum(&mut w2.iter().map(|x| x * x));

        // far field
        let edges = far_edges(grid.horizon as f64);
        let far_cells = edges.len() - 1;
        let mut far1 = vec![0.0; (n + 1) * far_cells];
        let mut far2 = vec![0.0; (n + 1) * far_cells];
        for u in 0..=n {
            let uf = u as f64;
            for i in 0..far_cells {
                let (lo, hi) = (edges[i], edges[i + 1]);
                let sw = (hi - lo).sqrt();
                let load = |a: f64| ((uf + hi).powf(a + 1.0) - (uf + lo).powf(a + 1.0)) / ((a + 1.0) * sw);
                far1[u * far_cells + i] = load(a1);
                far2[u * far_cells + i] = load(a2);
            }
        }
        let t = FAR_EDGE;
        let v = |x: f64, y: f64| t.powf(x + y + 1.0) / (-x - y - 1.0);
        let (v11, v12, v22) = (v(a1, a1), v(a1, a2), v(a2, a2));
        let l11 = v11.sqrt();
        let l21 = v12 / l11;
        let l22 = (v22 - l21 * l21).max(0.0).sqrt();
        let tail = [l11, l21, l22];
        let tail2 = l21 * l21 + l22 * l22;
        let row = |u: usize| &far2[u * far_cells..(u + 1) * far_cells];
        let far_var: Vec<f64> = (0..=n).map(|u| row(u).iter().map(|x| x * x).sum::<f64>() + tail2).collect();
        let far_cov: Vec<f64> = (0..n)
            .map(|u| row(u).iter().zip(row(u + 1)).map(|(x, y)| x * y).sum::<f64>() + tail2)
            .collect();

        let mut g = Self {
            h1,
            h2,
            n,
            k,
            offset,
            cells,
            size,
            spec_w1,
            spec_w2,
            spec_w2sq,
            far1,
            far2,
            far_cells,
            tail,
            far_var,
            far_cov,
            scale1: 1.0,
            scale2: 1.0,
            fwd,
            inv,
        };
        let (var1, var2) = g.unit_variances(&w1, &w2);
        let c1 = norm_constant(1, h1)?;
        let c2 = norm_constant(2, h2)?;
        if !(var1 > 0.0 && var2 > 0.0 && var1.is_finite() && var2.is_finite()) {
            return Err(Error::Calibration(format!("grid variances {var1}, {var2}")));
        }
        g.scale1 = 1.0 / var1.sqrt();
        g.scale2 = 1.0 / var2.sqrt();
        let diag = GridDiagnostics {
            variance1: c1 * c1 * var1,
            variance2: c2 * c2 * var2,
        };
        Ok((g, diag))
    }

    // Interpolation position of u-cell k: (unit index, weight of the right end).
    fn locate(&self, k: usize) -> (usize, f64) {
        let x = (k as f64 + 0.5) / self.k as f64;
        let u = (x.floor() as usize).min(self.n - 1);
        (u, x - u as f64)
    }

    // Exact variances of both unscaled components at t = 1.
    fn unit_variances(&self, w1: &[f64], w2: &[f64]) -> (f64, f64) {
        let k = self.k;
        let dx = 1.0 / k as f64;
        let sd = dx.sqrt();
        let fine = self.offset + k;
        let nf = self.far_cells;
        let interp = |far: &[f64], i: usize, kk: usize| {
            let (u, lam) = self.locate(kk);
            (1.0 - lam) * far[u * nf + i] + lam * far[(u + 1) * nf + i]
        };

        // component 1: sum of squared loadings of Δ Σ_k G₁(k)
        let mut v1 = CompensatedSum::new();
        for c in 0..fine {
            let s: f64 = (0..k)
                .filter(|&kk| self.offset + kk >= c)
                .map(|kk| w1[self.offset + kk - c])
                .sum();
            v1.add((dx * s * sd).powi(2));
        }
        for i in 0..nf {
            let s: f64 = (0..k).map(|kk| interp(&self.far1, i, kk)).sum();
            v1.add((dx * s).powi(2));
        }
        v1.add(self.tail[0].powi(2));

        // component 2: Var = 2Δ²[Σ_{kk'} G_{kk'}² - Σ_{fine m} (Σ_k L_m(k)²)²]
        let mut gram = vec![0.0; k * k];
        let mut fine_diag = CompensatedSum::new();
        let mut col = vec![0.0; k];
        let add = |col: &[f64], gram: &mut [f64]| {
            for a in 0..k {
                if col[a] == 0.0 {
                    continue;
                }
                for b in 0..k {
                    gram[a * k + b] += col[a] * col[b];
                }
            }
        };
        for c in 0..fine {
            for (kk, x) in col.iter_mut().enumerate() {
                *x = if self.offset + kk >= c {
                    w2[self.offset + kk - c] * sd
                } else {
                    0.0
                };
            }
            fine_diag.add(col.iter().map(|x| x * x).sum::<f64>().powi(2));
            add(&col, &mut gram);
        }
        for i in 0..nf {
            for (kk, x) in col.iter_mut().enumerate() {
                *x = interp(&self.far2, i, kk);
            }
            add(&col, &mut gram);
        }
        for l in [self.tail[1], self.tail[2]] {
            col.iter_mut().for_each(|x| *x = l);
            add(&col, &mut gram);
        }
        let total: CompensatedSum = gram.iter().map(|x| x * x).collect();
        let v2 = 2.0 * dx * dx * (total.value() - fine_diag.value());
        (v1.value(), v2)
    }

    pub fn sample_two(&self, key: &[u64]) -> [PathPair; 2] {
        let mut rng = stream_rng(key);
        let sd = (1.0 / self.k as f64).sqrt();
        let zero = Complex64::new(0.0, 0.0);
        let mut noise = vec![zero; self.size];
        let mut squares = vec![zero; self.size];
        for (z, s) in noise.iter_mut().zip(squares.iter_mut()).take(self.cells) {
            let a: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            let b: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            *z = Complex64::new(a, b);
            *s = Complex64::new(a * a, b * b);
        }
        let far_xi: Vec<[f64; 2]> = (0..self.far_cells + 2)
            .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        self.fwd.process(&mut noise);
        self.fwd.process(&mut squares);
        let conv = |x: &[Complex64], w: &[Complex64]| {
            let mut buf: Vec<Complex64> = x.iter().zip(w).map(|(a, b)| a * b).collect();
            self.inv.process(&mut buf);
            buf
        };
        let g1 = conv(&noise, &self.spec_w1);
        let g2 = conv(&noise, &self.spec_w2);
        let dg = conv(&squares, &self.spec_w2sq);
        let norm = 1.0 / self.size as f64;
        let pick = |z: &Complex64, r: usize| if r == 0 { z.re * norm } else { z.im * norm };
        [0, 1].map(|r| {
            let nf = self.far_cells;
            let mut far1 = vec![0.0; self.n + 1];
            let mut far2 = vec![0.0; self.n + 1];
            let (t1, t2) = (far_xi[nf][r], far_xi[nf + 1][r]);
            for u in 0..=self.n {
                let (mut a, mut b) = (self.tail[0] * t1, self.tail[1] * t1 + self.tail[2] * t2);
                for i in 0..nf {
                    a += self.far1[u * nf + i] * far_xi[i][r];
                    b += self.far2[u * nf + i] * far_xi[i][r];
                }
                far1[u] = a;
                far2[u] = b;
            }
            let dx = 1.0 / self.k as f64;
            let mut z1 = vec![0.0; self.n + 1];
            let mut z2 = vec![0.0; self.n + 1];
            let (mut s1, mut s2) = (0.0, 0.0);
            for step in 0..self.n {
                let (mut i1, mut i2) = (0.0, 0.0);
                for kk in step * self.k..(step + 1) * self.k {
                    let (u, lam) = self.locate(kk);
                    let c = self.offset + kk;
                    let f1 = (1.0 - lam) * far1[u] + lam * far1[u + 1];
                    let f2 = (1.0 - lam) * far2[u] + lam * far2[u + 1];
                    let wick = (1.0 - lam).powi(2) * self.far_var[u]
                        + 2.0 * lam * (1.0 - lam) * self.far_cov[u]
                        + lam * lam * self.far_var[u + 1];
                    let a = pick(&g1[c], r) + f1;
                    let b = pick(&g2[c], r) + f2;
                    i1 += a;
                    i2 += b * b - pick(&dg[c], r) - wick;
                }
                s1 += dx * i1;
                s2 += dx * i2;
                z1[step + 1] = s1 * self.scale1;
                z2[step + 1] = s2 * self.scale2;
            }
            let meta = |order, h| PathMeta {
                generator: "kernel-grid",
                order,
                h,
            };
            PathPair {
                component1: SamplePath::unit(z1, meta(1, self.h1)),
                component2: SamplePath::unit(z2, meta(2, self.h2)),
                coupling: Coupling::KernelGrid,
            }
        })
    }
}

/// A pair generator for one `(spec, N)`, sampling at unit spacing.
#[derive(Debug)]
pub enum PairGenerator {
    Subordinated(Box<SubordinatedGen>),
    Independent(Box<IndependentGen>),
    KernelGrid(Box<KernelGrid>),
}

#[derive(Debug)]
pub struct SubordinatedGen(Subordinated);

#[derive(Debug)]
pub struct IndependentGen {
    first: Single,
    second: Single,
}

impl PairGenerator {
    pub fn new(spec: &PairSpec, n: usize, opts: &SimOptions) -> Result<Self> {
        spec.validate()?;
        match spec.coupling()? {
            Coupling::Subordinated => Ok(PairGenerator::Subordinated(Box::new(SubordinatedGen(
                Subordinated::new(spec.q, spec.h1, n, opts.n_inner)?,
            )))),
            Coupling::IndependentDrivers => Ok(PairGenerator::Independent(Box::new(IndependentGen {
                first: Single::new(spec.q, spec.h1, n, opts.n_inner)?,
                second: Single::new(spec.q + 1, spec.h2, n, opts.n_inner)?,
            }))),
            Coupling::KernelGrid => Ok(PairGenerator::KernelGrid(Box::new(KernelGrid::new(
                spec.h1, spec.h2, n, opts.grid,
            )?))),
        }
    }

    /// Two independent replications from the stream `key`.
    pub fn sample_two(&self, key: &[u64]) -> [PathPair; 2] {
        match self {
            PairGenerator::Subordinated(g) => g.0.sample_two(key),
            PairGenerator::KernelGrid(g) => g.sample_two(key),
            PairGenerator::Independent(g) => {
                let mut k1 = key.to_vec();
                k1.push(COMPONENT_PRIMARY);
                let mut k2 = key.to_vec();
                k2.push(COMPONENT_SECONDARY);
                let [a1, b1] = g.first.sample_two(&k1);
                let [a2, b2] = g.second.sample_two(&k2);
                [
                    PathPair {
                        component1: a1,
                        component2: a2,
                        coupling: Coupling::IndependentDrivers,
                    },
                    PathPair {
                        component1: b1,
                        component2: b2,
                        coupling: Coupling::IndependentDrivers,
                    },
                ]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_examples() {
        assert!((constraint_h2(1, 0.85).unwrap() - 0.7).abs() < 1e-14);
        assert!((constraint_h2(2, 0.9).unwrap() - 0.85).abs() < 1e-14);
        assert!(constraint_h2(1, 0.75).is_err());
        assert!(constraint_h2(3, 0.6).is_err());
    }

    #[test]
    fn cell_weight_series_matches_direct() {
        for &a in &[-0.65, -0.9, -0.55] {
            for d in [8usize, 9, 30] {
                let p = a + 2.0;
                let x = d as f64;
                let direct = ((x + 1.0).powf(p) - 2.0 * x.powf(p) + (x - 1.0).powf(p)) / ((a + 1.0) * p);
                let s = cell_weight(a, d);
                assert!((s - direct).abs() / direct < 1e-9, "a={a} d={d}");
            }
            // far lags behave like d^a
            let big = 1e5 as usize;
            assert!((cell_weight(a, big) / (big as f64).powf(a) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn block_sums_use_exact_calibration() {
        // white driver: Var(Σ H_q) = n q!
        let v = hermite_sum_variance(0.5, 2, 100).unwrap();
        assert!((v - 200.0).abs() < 1e-9);
    }

    #[test]
    fn paths_start_at_zero_on_unit_grid() {
        let p = simulate_pair_subordinated(1, 0.85, 16, 64, 3).unwrap();
        assert_eq!(p.component1.values[0], 0.0);
        assert_eq!(p.component2.values.len(), 17);
        assert_eq!(p.spacing().unwrap(), 1.0);
        let r = rescale_selfsimilar(&p, 0.25, 0.85, 0.7).unwrap();
        assert!((r.spacing().unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn grid_diagnostics_near_one() {
        let d = KernelGrid::diagnostics(0.8, 0.8, GridSpec::default()).unwrap();
        assert!((d.variance1 - 1.0).abs() < 0.05, "{d:?}");
        assert!((d.variance2 - 1.0).abs() < 0.05, "{d:?}");
        // the Rosenblatt part loses its within-cell variance like Δ^{2H2-1}
        let d = KernelGrid::diagnostics(0.8, 0.7, GridSpec::default()).unwrap();
        assert!(d.variance2 < 0.95 && d.variance2 > 0.8, "{d:?}");
        assert!(matches!(
            KernelGrid::new(0.8, 0.7, 4, GridSpec::default()),
            Err(Error::GridTooCoarse { component: "component2", .. })
        ));
        let coarse = GridSpec::new(1, 32).unwrap();
        assert!(matches!(
            KernelGrid::new(0.8, 0.7, 4, coarse),
            Err(Error::GridTooCoarse { .. })
        ));
    }
}
