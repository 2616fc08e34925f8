//! Deterministic formulas: special functions, covariances, exponents,
//! Riemann-sum limits and the regime classifier.

mod covariance;
mod exponents;
mod regime;
mod riemann;
mod special;

pub use covariance::{cross_variance_independent, fbm_qv_variance, fgn_autocov, increment_cov, MAX_EXACT_N};
pub use exponents::{alpha_k, epsilon, exponents, Exponents, EXPONENT_TOL};
pub use regime::{
    boundary_curve, boundary_left_endpoint, boundary_segment, classify_regime, term_rates, v1_limit_law,
    v2_limit_law, Dominant, LimitLaw, Rate, RegimeReport, TermRates,
};
pub use riemann::{
    delta_ell, riemann_asymptotics, riemann_limit, weight_mass, ConstantWeight, DeltaTable, PairWeight,
    RiemannAsymptotics, SignPowerWeight, DELTA_RTOL, FAR_LAG,
};
pub use special::{
    beta, beta_tilde, beta_tilde_pair, beta_tilde_sup, binomial, binomial_real, factorial, norm_constant,
    KernelParams,
};
