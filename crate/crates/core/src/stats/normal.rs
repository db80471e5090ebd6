//! Standard normal density, distribution and inverse Mills ratio.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// 1/√(2π)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Mills ratio Φ(−z)/φ(z) for large positive `z`, from the continued
/// fraction 1/(z + 1/(z + 2/(z + 3/(z + …)))) evaluated bottom-up.
fn mills_tail(z: f64) -> f64 {
    let mut acc = 0.0;
    for k in (1..=120).rev() {
        acc = k as f64 / (z + acc);
    }
    1.0 / (z + acc)
}

/// ln Φ(x), finite far into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        -0.5 * x * x - 0.5 * (2.0 * PI).ln() + mills_tail(-x).ln()
    }
}

/// φ(x)/Φ(x). Below −6 the ratio is taken from the tail expansion, so it
/// stays accurate where Φ underflows.
pub fn inverse_mills(x: f64) -> f64 {
    if x < -6.0 {
        1.0 / mills_tail(-x)
    } else {
        norm_pdf(x) / norm_cdf(x)
    }
}
