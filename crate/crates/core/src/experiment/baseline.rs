//! External human baseline in the overlay format.
//!
//! Columns: `subject_id, k, trial, config_bits, payoff`. A row with
//! `trial = 0` gives the subject's starting configuration; without it the
//! first trial has no search distance.

use std::collections::BTreeMap;
use std::path::Path;

use super::ExperimentError;
use crate::landscape::{hamming, Configuration};
use crate::stats::TrialObs;

pub const BASELINE_COLUMNS: [&str; 5] = ["subject_id", "k", "trial", "config_bits", "payoff"];
pub const BASELINE_POPULATION: &str = "human";

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRecord {
    pub subject_id: String,
    pub k: usize,
    pub trial: usize,
    pub config: Configuration,
    pub payoff: f64,
}

fn parse_bits(s: &str) -> Option<Configuration> {
    let bits: Option<Vec<bool>> = s
        .chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect();
    bits.filter(|b| !b.is_empty()).map(Configuration::new)
}

/// Reads a baseline CSV. Errors name the offending row (1-based, header is
/// row 1) and column.
pub fn read_baseline(path: &Path) -> Result<Vec<BaselineRecord>, ExperimentError> {
    let fmt = |line: usize, message: String| ExperimentError::Format { path: path.to_path_buf(), line, message };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| fmt(1, e.to_string()))?;
    let headers = reader.headers().map_err(|e| fmt(1, e.to_string()))?.clone();
    let mut index = [0usize; 5];
    for (slot, name) in index.iter_mut().zip(BASELINE_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| fmt(1, format!("missing column {name:?}")))?;
    }
    let mut out: Vec<BaselineRecord> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| fmt(row, e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(fmt(row, format!("expected {} columns, found {}", headers.len(), rec.len())));
        }
        let field = |c: usize| &rec[index[c]];
        let bad = |c: usize| fmt(row, format!("column {:?}: invalid value {:?}", BASELINE_COLUMNS[c], field(c)));
        let k = field(1).parse().map_err(|_| bad(1))?;
        let trial = field(2).parse().map_err(|_| bad(2))?;
        let config = parse_bits(field(3)).ok_or_else(|| bad(3))?;
        let payoff: f64 = field(4).parse().map_err(|_| bad(4))?;
        if !payoff.is_finite() {
            return Err(bad(4));
        }
        if let Some(first) = out.first() {
            if first.config.len() != config.len() {
                return Err(fmt(row, format!("column \"config_bits\": expected {} bits, found {}", first.config.len(), config.len())));
            }
        }
        out.push(BaselineRecord { subject_id: field(0).to_string(), k, trial, config, payoff });
    }
    Ok(out)
}

/// Converts baseline rows to per-trial observations labeled
/// [`BASELINE_POPULATION`], measuring distance to the best prior
/// configuration (earliest on ties).
pub fn baseline_observations(records: &[BaselineRecord]) -> Result<Vec<TrialObs>, ExperimentError> {
    let mut subjects: BTreeMap<(&str, usize), Vec<&BaselineRecord>> = BTreeMap::new();
    for r in records {
        subjects.entry((r.subject_id.as_str(), r.k)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((subject, k), mut rows) in subjects {
        rows.sort_by_key(|r| r.trial);
        if let Some(w) = rows.windows(2).find(|w| w[0].trial == w[1].trial) {
            return Err(ExperimentError::Config(format!("baseline subject {subject} (k = {k}) repeats trial {}", w[0].trial)));
        }
        let mut best: Option<&BaselineRecord> = None;
        for r in rows {
            if r.trial > 0 {
                let distance = best.map(|b| hamming(&r.config, &b.config).expect("equal lengths"));
                out.push(TrialObs {
                    k,
                    population: BASELINE_POPULATION.into(),
                    trial: r.trial,
                    active: distance.map(|d| d > 0),
                    distance,
                    forward_ratio: None,
                });
            }
            if best.map_or(true, |b| r.payoff > b.payoff) {
                best = Some(r);
            }
        }
    }
    Ok(out)
}
