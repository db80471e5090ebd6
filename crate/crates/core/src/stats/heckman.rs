//! Two-step selection model: a probit for whether a trial searches, then
//! OLS of search distance on searching trials with the inverse Mills ratio
//! of the probit index as an extra regressor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::normal::inverse_mills;
use super::ols::{ols_fit, OlsFit};
use super::probit::{probit_fit, ProbitFit};
use super::rows::ObservationRow;
use super::StatsError;

/// Stage-1 regressors: (column name, report label).
pub const STAGE1_COLUMNS: [(&str, &str); 12] = [
    ("attention_breadth", "Attention Breadth"),
    ("forward_ratio", "Forward Looking Ratio"),
    ("fwd_ratio_x_trial", "Forward Looking Ratio X Trial"),
    ("trial", "Trial"),
    ("early_feedback", "Early Feedback"),
    ("average_feedback", "Average Feedback"),
    ("immediate_feedback", "Immediate Feedback"),
    ("reference", "Reference"),
    ("prior_distance", "Prior Search Distance"),
    ("k5", "K = 5"),
    ("k9", "K = 9"),
    ("intercept", "Constant"),
];

/// Stage-2 regressors: stage 1 without the exclusion restriction, plus the
/// selection correction.
pub const STAGE2_COLUMNS: [(&str, &str); 12] = [
    ("attention_breadth", "Attention Breadth"),
    ("forward_ratio", "Forward Looking Ratio"),
    ("fwd_ratio_x_trial", "Forward Looking Ratio X Trial"),
    ("trial", "Trial"),
    ("average_feedback", "Average Feedback"),
    ("immediate_feedback", "Immediate Feedback"),
    ("reference", "Reference"),
    ("prior_distance", "Prior Search Distance"),
    ("k5", "K = 5"),
    ("k9", "K = 9"),
    ("intercept", "Constant"),
    ("inverse_mills", "Inverse Mills Ratio"),
];

const MILLS: &str = "inverse_mills";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeckmanResult {
    pub stage1: ProbitFit,
    /// Classical OLS standard errors, not corrected for the estimated
    /// Mills regressor.
    pub stage2: OlsFit,
    pub pseudo_r2: f64,
    pub n_stage1: usize,
    pub n_stage2: usize,
    pub notes: Vec<String>,
}

fn value(row: &ObservationRow, column: &str) -> f64 {
    let b = |v: bool| if v { 1.0 } else { 0.0 };
    match column {
        "attention_breadth" => row.attention_breadth as f64,
        "forward_ratio" => row.forward_ratio,
        "fwd_ratio_x_trial" => row.fwd_ratio_x_trial,
        "trial" => row.trial as f64,
        "early_feedback" => row.early_feedback,
        "average_feedback" => row.average_feedback,
        "immediate_feedback" => row.immediate_feedback,
        "reference" => row.reference,
        "prior_distance" => row.prior_distance as f64,
        "k5" => b(row.k5),
        "k9" => b(row.k9),
        "intercept" => 1.0,
        other => unreachable!("unknown column {other}"),
    }
}

/// Generic two-step estimator. `x1` and `selected` cover every observation;
/// `x2` and `y2` cover the selected observations only, in order. The Mills
/// column is appended to `x2` under the name `inverse_mills`.
pub fn two_step(
    x1: &DMatrix<f64>,
    selected: &[bool],
    names1: &[String],
    x2: &DMatrix<f64>,
    y2: &[f64],
    names2: &[String],
) -> Result<(ProbitFit, OlsFit), StatsError> {
    let n_sel = selected.iter().filter(|&&s| s).count();
    if x2.nrows() != n_sel || y2.len() != n_sel {
        return Err(StatsError::Shape(format!(
            "stage 2 has {} rows and {} outcomes but {n_sel} observations are selected",
            x2.nrows(),
            y2.len()
        )));
    }
    let stage1 = probit_fit(x1, selected, names1)?;
    let index = stage1.linear_index(x1);
    let mills: Vec<f64> = index.iter().zip(selected).filter(|(_, &s)| s).map(|(&v, _)| inverse_mills(v)).collect();
    let p2 = x2.ncols();
    let design = x2.clone().insert_column(p2, 0.0);
    let mut design = design;
    design.set_column(p2, &DVector::from_vec(mills));
    let mut names = names2.to_vec();
    names.push(MILLS.to_string());
    let stage2 = ols_fit(&design, &DVector::from_column_slice(y2), &names).map_err(|e| match e {
        StatsError::Rank { columns, .. } if columns.iter().any(|c| c == MILLS) => StatsError::Rank {
            columns,
            hint: Some(
                "the inverse Mills ratio is collinear with the outcome regressors; the selection equation needs a \
                 regressor with real variation that is excluded from the outcome equation"
                    .into(),
            ),
        },
        other => other,
    })?;
    Ok((stage1, stage2))
}

/// Fits the two-step model on observation rows. Both active and inactive
/// rows must be present.
pub fn heckman(rows: &[ObservationRow]) -> Result<HeckmanResult, StatsError> {
    let names = |cols: &[(&str, &str)]| cols.iter().map(|c| c.0.to_string()).collect::<Vec<_>>();
    let x1 = DMatrix::from_fn(rows.len(), STAGE1_COLUMNS.len(), |i, j| value(&rows[i], STAGE1_COLUMNS[j].0));
    let selected: Vec<bool> = rows.iter().map(|r| r.active).collect();
    let active: Vec<&ObservationRow> = rows.iter().filter(|r| r.active).collect();
    let outcome_cols = &STAGE2_COLUMNS[..STAGE2_COLUMNS.len() - 1];
    let x2 = DMatrix::from_fn(active.len(), outcome_cols.len(), |i, j| value(active[i], outcome_cols[j].0));
    let y2: Vec<f64> = active.iter().map(|r| r.distance as f64).collect();
    let (stage1, stage2) = two_step(&x1, &selected, &names(&STAGE1_COLUMNS), &x2, &y2, &names(outcome_cols))?;
    if stage2.n != active.len() {
        return Err(StatsError::Integrity(format!("stage 2 used {} rows but {} are active", stage2.n, active.len())));
    }
    let mut notes = vec![
        "Feedback variables are fitness on a 0-1 scale (payoff points / 100).".to_string(),
        "Stage-1 standard errors: inverse observed information. Stage-2 standard errors: classical OLS, uncorrected for the estimated Mills regressor.".to_string(),
        "P-values use the standard normal reference distribution (z).".to_string(),
        "Early feedback spans trials 1-3, so rows for trials 1-3 include payoffs not yet observed.".to_string(),
    ];
    let missing = rows.iter().filter(|r| r.attention_missing).count();
    if missing > 0 {
        notes.push(format!("{missing} row(s) had no annotation; attention variables were set to zero."));
    }
    if !stage1.converged {
        notes.push(format!("Stage 1 did not converge (gradient max-norm {:.3e}).", stage1.gradient_max));
    }
    Ok(HeckmanResult {
        pseudo_r2: stage1.pseudo_r2(),
        n_stage1: rows.len(),
        n_stage2: active.len(),
        stage1,
        stage2,
        notes,
    })
}

fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

impl HeckmanResult {
    /// Aligned text table: one row per variable, stage 1 then stage 2.
    pub fn render_table(&self) -> String {
        let mut labels: Vec<(&str, &str)> = STAGE1_COLUMNS.to_vec();
        labels.insert(labels.len() - 1, STAGE2_COLUMNS[STAGE2_COLUMNS.len() - 1]);
        let cell = |names: &[String], coef: &[f64], se: &[f64], p: &[f64], col: &str| {
            names.iter().position(|n| n == col).map_or_else(
                || format!("{:>12} {:>9} {:>8}", "", "", ""),
                |j| format!("{:>12} {:>9.3} {:>8.3}", format!("{:.3}{}", coef[j], stars(p[j])), se[j], p[j]),
            )
        };
        let s1 = &self.stage1;
        let s2 = &self.stage2;
        let width = 30;
        let mut out = String::new();
        out.push_str(&format!("{:<width$} {:^31} {:^31}\n", "Variables", "1st Step Heckman", "2nd Step Heckman"));
        out.push_str(&format!("{:<width$} {:^31} {:^31}\n", "", "Active Search", "Search Distance"));
        out.push_str(&format!(
            "{:<width$} {:>12} {:>9} {:>8} {:>12} {:>9} {:>8}\n",
            "", "Coef.", "S.E.", "P-Value", "Coef.", "S.E.", "P-Value"
        ));
        out.push_str(&"-".repeat(width + 64));
        out.push('\n');
        for (col, label) in labels {
            out.push_str(&format!(
                "{label:<width$} {} {}\n",
                cell(&s1.names, &s1.coefficients, &s1.std_errors, &s1.p_values, col),
                cell(&s2.names, &s2.coefficients, &s2.std_errors, &s2.p_values, col),
            ));
        }
        out.push_str(&"-".repeat(width + 64));
        out.push('\n');
        out.push_str(&format!("{:<width$} {:>31} {:>31}\n", "Observations", self.n_stage1, self.n_stage2));
        out.push_str(&format!("{:<width$} {:>31.3}\n", "Log-Likelihood", s1.log_likelihood));
        out.push_str(&format!("{:<width$} {:>31.3}\n", "Pseudo R-squared", self.pseudo_r2));
        out.push_str(&format!("{:<width$} {:>31} {:>31.3}\n", "R-squared", "", s2.r_squared));
        out.push_str("\n* p < 0.05, ** p < 0.01, *** p < 0.001\n");
        for n in &self.notes {
            out.push_str(n);
            out.push('\n');
        }
        out
    }
}
