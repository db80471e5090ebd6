//! Regression rows, the two-step selection model and per-trial aggregates.
//!
//! All estimation is deterministic: no random numbers are drawn, and sums
//! run in a fixed order, so equal inputs give bit-identical outputs.

mod aggregates;
mod heckman;
pub mod normal;
mod ols;
mod probit;
mod rows;

use thiserror::Error;

pub use aggregates::{distance_summary, observations, series, GroupBy, GroupSummary, Metric, SeriesPoint, TrialObs};
pub use heckman::{heckman, two_step, HeckmanResult, STAGE1_COLUMNS, STAGE2_COLUMNS};
pub use normal::{inverse_mills, norm_cdf, norm_pdf};
pub use ols::{dependent_columns, ols_fit, OlsFit};
pub use probit::{probit_fit, ProbitFit, GRADIENT_TOL, MAX_ITERATIONS};
pub use rows::{build_rows, ObservationRow, ROW_COLUMNS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("outcome has a single class (all {})", if *.value { "ones" } else { "zeros" })]
    SingleClass { value: bool },
    #[error("perfect separation: column {column} splits the outcome classes, so the likelihood has no maximum")]
    Separation { column: String },
    #[error("rank deficient design: {} depend(s) on earlier columns{}", .columns.join(", "), .hint.as_deref().map(|h| format!("; {h}")).unwrap_or_default())]
    Rank { columns: Vec<String>, hint: Option<String> },
    #[error("integrity error: {0}")]
    Integrity(String),
}

/// Two-sided p-value against the standard normal.
pub fn p_value(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2)
}

#[cfg(test)]
pub(crate) fn standard_normal(r: &mut impl rand::Rng) -> f64 {
    // Box–Muller
    let u1: f64 = 1.0 - r.gen::<f64>();
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
