//! Ordinary least squares through a QR decomposition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{p_value, StatsError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Classical standard errors, σ̂²(XᵀX)⁻¹.
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub residual_sum_squares: f64,
    pub sigma2: f64,
    pub n: usize,
}

/// Columns of `x` that are (numerically) linear combinations of the columns
/// before them, in order.
pub fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let residual = if norm == 0.0 {
            0.0
        } else if basis.is_empty() {
            norm
        } else {
            let b = x.select_columns(&basis);
            let qr = b.qr();
            let q = qr.q();
            (&col - &q * (q.transpose() * &col)).norm()
        };
        if norm == 0.0 || residual <= 1e-9 * norm {
            dependent.push(j);
        } else {
            basis.push(j);
        }
    }
    dependent
}

pub(crate) fn check_design(x: &DMatrix<f64>, names: &[String], rows: usize) -> Result<(), StatsError> {
    if names.len() != x.ncols() {
        return Err(StatsError::Shape(format!("{} names for {} columns", names.len(), x.ncols())));
    }
    if rows != x.nrows() {
        return Err(StatsError::Shape(format!("{} outcomes for {} rows", rows, x.nrows())));
    }
    if x.nrows() <= x.ncols() {
        return Err(StatsError::Shape(format!("{} rows cannot identify {} coefficients", x.nrows(), x.ncols())));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        let (r, c) = (i % x.nrows(), i / x.nrows());
        return Err(StatsError::Shape(format!("non-finite value in column {} row {r}", names[c])));
    }
    let dep = dependent_columns(x);
    if !dep.is_empty() {
        return Err(StatsError::Rank { columns: dep.iter().map(|&j| names[j].clone()).collect(), hint: None });
    }
    Ok(())
}

pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsFit, StatsError> {
    check_design(x, names, y.len())?;
    let (n, p) = x.shape();
    let qr = x.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let beta = r
        .solve_upper_triangular(&(q.transpose() * y))
        .ok_or_else(|| StatsError::Rank { columns: names.to_vec(), hint: None })?;
    let resid = y - x * &beta;
    let rss = resid.norm_squared();
    let sigma2 = rss / (n - p) as f64;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p)).expect("checked full rank");
    let cov = &r_inv * r_inv.transpose() * sigma2;
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let std_errors: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    let z_values: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    Ok(OlsFit {
        names: names.to_vec(),
        coefficients: beta.iter().copied().collect(),
        p_values: z_values.iter().map(|&z| p_value(z)).collect(),
        std_errors,
        z_values,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN },
        residual_sum_squares: rss,
        sigma2,
        n,
    })
}
