//! One regression row per trial.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::annotate::{forward_ratio, ThoughtAnnotation};
use crate::game::RunRecord;

/// Column names in file order.
pub const ROW_COLUMNS: [&str; 17] = [
    "run_id",
    "population",
    "k",
    "trial",
    "active",
    "distance",
    "attention_breadth",
    "forward_ratio",
    "fwd_ratio_x_trial",
    "early_feedback",
    "average_feedback",
    "immediate_feedback",
    "reference",
    "prior_distance",
    "k5",
    "k9",
    "attention_missing",
];

/// Feedback covariates are fitness in [0, 1], i.e. payoff points / 100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationRow {
    pub run_id: String,
    pub population: String,
    pub k: usize,
    pub trial: usize,
    pub active: bool,
    pub distance: usize,
    pub attention_breadth: usize,
    pub forward_ratio: f64,
    pub fwd_ratio_x_trial: f64,
    /// Best of trials 1–3; identical on every row of a run.
    pub early_feedback: f64,
    /// Mean payoff of trials before this one (the start payoff on trial 1).
    pub average_feedback: f64,
    /// Payoff of the previous trial (the start payoff on trial 1).
    pub immediate_feedback: f64,
    /// Best payoff of trials before this one (the start payoff on trial 1).
    pub reference: f64,
    /// Distance of the previous trial (0 on trial 1).
    pub prior_distance: usize,
    pub k5: bool,
    pub k9: bool,
    /// No annotation was found; attention fields are zero.
    pub attention_missing: bool,
}

impl ObservationRow {
    pub fn to_record(&self) -> Vec<String> {
        let b = |v: bool| if v { "1" } else { "0" }.to_string();
        vec![
            self.run_id.clone(),
            self.population.clone(),
            self.k.to_string(),
            self.trial.to_string(),
            b(self.active),
            self.distance.to_string(),
            self.attention_breadth.to_string(),
            self.forward_ratio.to_string(),
            self.fwd_ratio_x_trial.to_string(),
            self.early_feedback.to_string(),
            self.average_feedback.to_string(),
            self.immediate_feedback.to_string(),
            self.reference.to_string(),
            self.prior_distance.to_string(),
            b(self.k5),
            b(self.k9),
            b(self.attention_missing),
        ]
    }
}

fn check_run(run: &RunRecord) -> Result<(), StatsError> {
    if !run.is_complete() {
        return Err(StatsError::Integrity(format!(
            "run {} is not complete ({:?}, {} of {} trials)",
            run.run_id,
            run.status,
            run.trials.len(),
            run.planned_trials
        )));
    }
    for (i, t) in run.trials.iter().enumerate() {
        if t.trial != i + 1 {
            return Err(StatsError::Integrity(format!("run {} is missing trial {}", run.run_id, i + 1)));
        }
    }
    Ok(())
}

/// Builds `planned_trials` rows per run, in run then trial order.
pub fn build_rows(runs: &[RunRecord], annotations: &[ThoughtAnnotation]) -> Result<Vec<ObservationRow>, StatsError> {
    let index: HashMap<(&str, usize), &ThoughtAnnotation> =
        annotations.iter().map(|a| ((a.run_id.as_str(), a.trial), a)).collect();
    let mut rows = Vec::with_capacity(runs.iter().map(|r| r.trials.len()).sum());
    for run in runs {
        check_run(run)?;
        let fit: Vec<f64> = run.trials.iter().map(|t| t.payoff / 100.0).collect();
        let start = run.start_payoff / 100.0;
        let early = fit.iter().take(3).copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut sum, mut best) = (0.0, f64::NEG_INFINITY);
        for (i, t) in run.trials.iter().enumerate() {
            let (average, immediate, reference, prior_distance) = if i == 0 {
                (start, start, start, 0)
            } else {
                (sum / i as f64, fit[i - 1], best, run.trials[i - 1].distance)
            };
            let ann = index.get(&(run.run_id.as_str(), t.trial));
            let ratio = ann.map_or(0.0, |a| forward_ratio(a));
            rows.push(ObservationRow {
                run_id: run.run_id.clone(),
                population: run.population.clone(),
                k: run.landscape.k,
                trial: t.trial,
                active: t.active,
                distance: t.distance,
                attention_breadth: ann.map_or(0, |a| a.breadth),
                forward_ratio: ratio,
                fwd_ratio_x_trial: ratio * t.trial as f64,
                early_feedback: early,
                average_feedback: average,
                immediate_feedback: immediate,
                reference,
                prior_distance,
                k5: run.landscape.k == 5,
                k9: run.landscape.k == 9,
                attention_missing: ann.is_none(),
            });
            sum += fit[i];
            best = best.max(fit[i]);
        }
    }
    Ok(rows)
}
