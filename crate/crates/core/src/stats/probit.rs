//! Probit maximum likelihood by Newton–Raphson.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::normal::{inverse_mills, log_norm_cdf};
use super::ols::check_design;
use super::{p_value, StatsError};

pub const GRADIENT_TOL: f64 = 1e-8;
/// Looser bound accepted when the likelihood can no longer be improved in
/// floating point before `GRADIENT_TOL` is reached.
pub const STALL_TOL: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Square roots of the inverse observed information diagonal.
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub log_likelihood: f64,
    /// Intercept-only log-likelihood.
    pub null_log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the score at the reported coefficients.
    pub gradient_max: f64,
    pub n: usize,
}

impl ProbitFit {
    /// McFadden's 1 − LL/LL₀.
    pub fn pseudo_r2(&self) -> f64 {
        1.0 - self.log_likelihood / self.null_log_likelihood
    }

    pub fn linear_index(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * DVector::from_column_slice(&self.coefficients)
    }
}

struct Eval {
    ll: f64,
    grad: DVector<f64>,
    info: DMatrix<f64>,
}

fn evaluate(x: &DMatrix<f64>, q: &[f64], beta: &DVector<f64>) -> Eval {
    let p = x.ncols();
    let xb = x * beta;
    let mut ll = 0.0;
    let mut grad = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    for (i, &qi) in q.iter().enumerate() {
        let u = qi * xb[i];
        ll += log_norm_cdf(u);
        let lam = inverse_mills(u);
        let w = lam * (lam + u);
        let row = x.row(i);
        for a in 0..p {
            grad[a] += qi * lam * row[a];
            let wa = w * row[a];
            for b in 0..=a {
                info[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    Eval { ll, grad, info }
}

fn log_likelihood(x: &DMatrix<f64>, q: &[f64], beta: &DVector<f64>) -> f64 {
    let xb = x * beta;
    q.iter().zip(xb.iter()).map(|(qi, v)| log_norm_cdf(qi * v)).sum()
}

/// A column that alone splits the classes (every value for one class at or
/// below every value for the other) makes the likelihood unbounded.
fn separating_column(x: &DMatrix<f64>, y: &[bool], names: &[String]) -> Option<String> {
    for j in 0..x.ncols() {
        let col = x.column(j);
        let range = |class: bool| {
            col.iter().zip(y).filter(|(_, &c)| c == class).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
                (lo.min(v), hi.max(v))
            })
        };
        let ((lo0, hi0), (lo1, hi1)) = (range(false), range(true));
        if lo0 == hi0 && lo1 == hi1 && lo0 == lo1 {
            continue; // constant column, e.g. the intercept
        }
        if hi0 <= lo1 || hi1 <= lo0 {
            return Some(names[j].clone());
        }
    }
    None
}

pub fn probit_fit(x: &DMatrix<f64>, y: &[bool], names: &[String]) -> Result<ProbitFit, StatsError> {
    check_design(x, names, y.len())?;
    let n1 = y.iter().filter(|&&v| v).count();
    if n1 == 0 || n1 == y.len() {
        return Err(StatsError::SingleClass { value: n1 > 0 });
    }
    if let Some(column) = separating_column(x, y, names) {
        return Err(StatsError::Separation { column });
    }
    let q: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    let mut eval = evaluate(x, &q, &beta);
    let mut iterations = 0;
    let mut stalled = false;
    while eval.grad.amax() >= GRADIENT_TOL && iterations < MAX_ITERATIONS {
        iterations += 1;
        let chol = eval.info.clone().cholesky().ok_or_else(|| StatsError::Rank { columns: names.to_vec(), hint: None })?;
        let step = chol.solve(&eval.grad);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = &beta + &step * scale;
            if log_likelihood(x, &q, &candidate) >= eval.ll {
                accepted = Some(candidate);
                break;
            }
            scale *= 0.5;
        }
        if accepted.as_ref().is_none_or(|b| *b == beta) {
            // at the optimum the likelihood is flat to rounding; take the
            // Newton step if it still shrinks the score
            let candidate = &beta + &step;
            let trial = evaluate(x, &q, &candidate);
            if trial.grad.amax() < eval.grad.amax() {
                beta = candidate;
                eval = trial;
                continue;
            }
        }
        match accepted {
            Some(b) if b != beta => {
                beta = b;
                eval = evaluate(x, &q, &beta);
            }
            _ => {
                stalled = true;
                break;
            }
        }
    }
    let gradient_max = eval.grad.amax();
    let converged = gradient_max < GRADIENT_TOL || (stalled && gradient_max < STALL_TOL);
    if !converged {
        // the likelihood keeps rising along some direction: name the column
        // carrying the largest standardized coefficient
        let worst = (0..p)
            .max_by(|&a, &b| {
                let s = |j: usize| beta[j].abs() * x.column(j).iter().map(|v| v.abs()).fold(0.0, f64::max);
                s(a).total_cmp(&s(b))
            })
            .unwrap();
        if beta.amax() > 20.0 {
            return Err(StatsError::Separation { column: names[worst].clone() });
        }
    }
    let cov = eval
        .info
        .clone()
        .cholesky()
        .ok_or_else(|| StatsError::Rank { columns: names.to_vec(), hint: None })?
        .inverse();
    let std_errors: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    let z_values: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let nf = y.len() as f64;
    let share = n1 as f64 / nf;
    let null_log_likelihood = n1 as f64 * share.ln() + (nf - n1 as f64) * (1.0 - share).ln();
    Ok(ProbitFit {
        names: names.to_vec(),
        coefficients: beta.iter().copied().collect(),
        p_values: z_values.iter().map(|&z| p_value(z)).collect(),
        std_errors,
        z_values,
        log_likelihood: eval.ll,
        null_log_likelihood,
        converged,
        iterations,
        gradient_max,
        n: y.len(),
    })
}
