//! Per-trial series grouped by landscape or population.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::annotate::{forward_ratio, ThoughtAnnotation};
use crate::game::RunRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    K,
    Population,
}

/// One trial of one participant, as far as the series need it. Fields are
/// optional so that external data with gaps can be mixed in.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialObs {
    pub k: usize,
    pub population: String,
    pub trial: usize,
    pub active: Option<bool>,
    pub distance: Option<usize>,
    pub forward_ratio: Option<f64>,
}

/// A series value; `value: None` marks a gap (no observations).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub group: String,
    pub trial: usize,
    pub value: Option<f64>,
    pub sd: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    ActiveFraction,
    /// Over actively searching trials only, with sample SD.
    DistanceMean,
    ForwardRatioMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub n_active: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

pub fn observations(runs: &[RunRecord], annotations: &[ThoughtAnnotation]) -> Vec<TrialObs> {
    let index: HashMap<(&str, usize), &ThoughtAnnotation> =
        annotations.iter().map(|a| ((a.run_id.as_str(), a.trial), a)).collect();
    runs.iter()
        .flat_map(|run| {
            let index = &index;
            run.trials.iter().map(move |t| TrialObs {
                k: run.landscape.k,
                population: run.population.clone(),
                trial: t.trial,
                active: Some(t.active),
                distance: Some(t.distance),
                forward_ratio: index.get(&(run.run_id.as_str(), t.trial)).map(|a| forward_ratio(a)),
            })
        })
        .collect()
}

fn group_key(o: &TrialObs, by: GroupBy) -> (usize, String) {
    match by {
        GroupBy::K => (o.k, format!("K={}", o.k)),
        GroupBy::Population => (0, o.population.clone()),
    }
}

/// Mean and sample SD of `values`, summed in sorted order so the result
/// does not depend on input order.
fn mean_sd(values: &mut [f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    dev.sort_by(f64::total_cmp);
    (Some(mean), Some((dev.iter().sum::<f64>() / (n - 1.0)).sqrt()))
}

/// One point per group and trial 1..=`trials`, gaps included.
pub fn series(obs: &[TrialObs], metric: Metric, by: GroupBy, trials: usize) -> Vec<SeriesPoint> {
    let mut cells: BTreeMap<(usize, String), Vec<Vec<f64>>> = BTreeMap::new();
    for o in obs {
        let cell = cells.entry(group_key(o, by)).or_insert_with(|| vec![Vec::new(); trials]);
        if o.trial == 0 || o.trial > trials {
            continue;
        }
        let v = match metric {
            Metric::ActiveFraction => o.active.map(|a| if a { 1.0 } else { 0.0 }),
            Metric::DistanceMean => match (o.active, o.distance) {
                (Some(true), Some(d)) => Some(d as f64),
                _ => None,
            },
            Metric::ForwardRatioMean => o.forward_ratio,
        };
        if let Some(v) = v {
            cell[o.trial - 1].push(v);
        }
    }
    let mut out = Vec::new();
    for ((_, group), mut per_trial) in cells {
        for (i, values) in per_trial.iter_mut().enumerate() {
            let (value, sd) = mean_sd(values);
            out.push(SeriesPoint {
                group: group.clone(),
                trial: i + 1,
                value,
                sd: if metric == Metric::DistanceMean { sd } else { None },
            });
        }
    }
    out
}

/// Mean and SD of search distance over all actively searching trials.
pub fn distance_summary(obs: &[TrialObs], by: GroupBy) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for o in obs {
        let entry = groups.entry(group_key(o, by)).or_default();
        if let (Some(true), Some(d)) = (o.active, o.distance) {
            entry.push(d as f64);
        }
    }
    groups
        .into_iter()
        .map(|((_, group), mut v)| {
            let (mean, sd) = mean_sd(&mut v);
            GroupSummary { group, n_active: v.len(), mean, sd }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Agent, AgentKind, AgentSpec, HillClimbAgent, Observable};
    use crate::game::{GameState, Objective, RunStatus};
    use crate::landscape::{Configuration, Landscape};
    use crate::stats::rows::tests::random_run;
    use proptest::prelude::*;

    fn obs(trial: usize, active: bool, distance: usize) -> TrialObs {
        TrialObs { k: 5, population: "p".into(), trial, active: Some(active), distance: Some(distance), forward_ratio: None }
    }

    #[test]
    fn all_active_is_one() {
        let o = vec![obs(1, true, 2), obs(1, true, 1)];
        let s = series(&o, Metric::ActiveFraction, GroupBy::K, 1);
        assert_eq!(s[0].value, Some(1.0));
    }

    #[test]
    fn single_run_has_no_sd_and_empty_trials_gap() {
        let o = vec![obs(1, true, 3), obs(2, false, 0)];
        let s = series(&o, Metric::DistanceMean, GroupBy::K, 3);
        assert_eq!(s[0].value, Some(3.0));
        assert_eq!(s[0].sd, None);
        // trial 2 has only an inactive row, trial 3 nothing at all
        assert_eq!(s[1].value, None);
        assert_eq!(s[2].value, None);
        let f = series(&o, Metric::ForwardRatioMean, GroupBy::K, 3);
        assert!(f.iter().all(|p| p.value.is_none()));
    }

    #[test]
    fn summary_matches_one_pass_recomputation() {
        let l = Landscape::generate(10, 5, 8).unwrap();
        let mut runs: Vec<RunRecord> = (0..25).map(|i| random_run(&l, i, &format!("r{i}"), 24)).collect();
        for (i, r) in runs.iter_mut().enumerate() {
            r.population = if i % 2 == 0 { "even".into() } else { "odd".into() };
        }
        let summary = distance_summary(&observations(&runs, &[]), GroupBy::Population);
        for g in &summary {
            // Welford's one-pass algorithm over the same rows
            let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
            for r in runs.iter().filter(|r| r.population == g.group) {
                for t in r.trials.iter().filter(|t| t.active) {
                    n += 1.0;
                    let d = t.distance as f64 - mean;
                    mean += d / n;
                    m2 += d * (t.distance as f64 - mean);
                }
            }
            assert_eq!(g.n_active as f64, n);
            assert!((g.mean.unwrap() - mean).abs() < 1e-12);
            assert!((g.sd.unwrap() - (m2 / (n - 1.0)).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn hill_climbers_on_a_single_peak_stop_for_good() {
        let l = Landscape::generate(10, 0, 21).unwrap();
        let runs: Vec<RunRecord> = (0..1024)
            .map(|start| {
                let mut agent = HillClimbAgent::new(&AgentSpec::scripted(AgentKind::HillClimb, start as u64));
                let mut g = GameState::with_start(&l, Configuration::from_index(start, 10), 24).unwrap();
                while !g.is_closed() {
                    let a = agent.next_move(&Observable::of(&g, Objective::Wealth)).unwrap();
                    g.submit(a.config, a.raw_text).unwrap();
                }
                g.into_record(format!("{start}"), "h".into(), "h".into(), Objective::Wealth, RunStatus::Complete)
            })
            .collect();
        let s = series(&observations(&runs, &[]), Metric::ActiveFraction, GroupBy::K, 24);
        for w in s.windows(2) {
            assert!(w[1].value.unwrap() <= w[0].value.unwrap(), "{w:?}");
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant(seed in 0u64..1000, rot in 0usize..10) {
            let l = Landscape::generate(8, 3, seed).unwrap();
            let runs: Vec<RunRecord> = (0..10).map(|i| random_run(&l, seed * 31 + i, &format!("r{i}"), 12)).collect();
            let mut rotated = runs.clone();
            rotated.rotate_left(rot);
            rotated.reverse();
            for m in [Metric::ActiveFraction, Metric::DistanceMean] {
                prop_assert_eq!(
                    series(&observations(&runs, &[]), m, GroupBy::K, 12),
                    series(&observations(&rotated, &[]), m, GroupBy::K, 12)
                );
            }
        }
    }
}
