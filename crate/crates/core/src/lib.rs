//! Quadratic variation of the sum of two Hermite processes of consecutive
//! orders `q` and `q + 1`.
//!
//! The crate is split into an analytic layer ([`analytic`], [`chaosor`]),
//! path generators ([`gaussgen`], [`hermpath`]), the variation statistics
//! ([`quadvar`]) and a Monte Carlo harness ([`mcharness`]).

pub mod analytic;
pub mod chaosor;
pub mod error;
pub mod gaussgen;
pub mod hermpath;
pub mod mcharness;
pub mod model;
pub mod numeric;
pub mod quadvar;
pub mod seeds;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Coupling, Dependence, PairSpec, ScaleSchedule, ScheduleKind};
