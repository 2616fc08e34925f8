use thiserror::Error;

/// Errors raised by the analytic layer, the generators and the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the range where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// `beta_tilde` evaluated on the diagonal u = v.
    #[error("beta_tilde is undefined on the diagonal u = v (u = v = {0})")]
    SingularInput(f64),

    /// Circulant embedding produced eigenvalues below the clamping tolerance.
    #[error("circulant embedding of length {embedding} failed: most negative eigenvalue {min_eigenvalue:e}")]
    EmbeddingFailure { embedding: usize, min_eigenvalue: f64 },

    /// A quadrature did not stabilise under node doubling.
    #[error("quadrature did not converge: {what} (last relative change {rel_change:e})")]
    QuadratureConvergence { what: String, rel_change: f64 },

    /// The kernel grid reproduces the unit variance at t = 1 only poorly.
    #[error("kernel grid too coarse: variance of {component} at t=1 is {variance} (tolerance 5%)")]
    GridTooCoarse { component: &'static str, variance: f64 },

    /// The pair is off the subordination constraint line or otherwise inconsistent.
    #[error("constraint violation: {0}")]
    Constraint(String),

    /// Calibration constants could not be computed.
    #[error("calibration failure: {0}")]
    Calibration(String),

    #[error("unsupported schedule: {0}")]
    UnsupportedSchedule(String),

    #[error("degenerate standard deviation at N = {n}")]
    DegenerateSd { n: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("ill-conditioned basis: |<g,h>| = {0} is too close to 1")]
    IllConditioned(f64),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
