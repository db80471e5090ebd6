//! Analysis outputs: observation rows, the two-step regression report and
//! per-trial series files.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::annotate_store::read_annotations;
use super::baseline::{baseline_observations, read_baseline};
use super::manifest::Manifest;
use super::store::read_store;
use super::{write_atomic, ExperimentError, TOOL_VERSION};
use crate::game::RunRecord;
use crate::stats::{build_rows, distance_summary, heckman, observations, series, GroupBy, GroupSummary, Metric, SeriesPoint, ROW_COLUMNS};

/// Series files written by [`analyze`]: (file name, metric, grouping).
pub const SERIES_FILES: [(&str, Metric, GroupBy); 5] = [
    ("active_by_k.csv", Metric::ActiveFraction, GroupBy::K),
    ("distance_by_k.csv", Metric::DistanceMean, GroupBy::K),
    ("forward_ratio_by_k.csv", Metric::ForwardRatioMean, GroupBy::K),
    ("active_by_population.csv", Metric::ActiveFraction, GroupBy::Population),
    ("distance_by_population.csv", Metric::DistanceMean, GroupBy::Population),
];

pub const ROWS_FILE: &str = "rows.csv";
pub const HECKMAN_TEXT: &str = "heckman.txt";
pub const HECKMAN_JSON: &str = "heckman.json";
pub const SUMMARY_FILE: &str = "distance_summary.csv";

#[derive(Clone, Debug, Default)]
pub struct AnalyzeOptions {
    /// Output directory; defaults to `analysis/` inside the store directory.
    pub out_dir: Option<PathBuf>,
    /// Analyze complete runs even if the experiment is unfinished.
    pub allow_partial: bool,
    /// Skip the mixed-configuration and manifest checks.
    pub force: bool,
    pub human_baseline: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub out_dir: PathBuf,
    pub runs: usize,
    pub rows: usize,
    pub active_rows: usize,
    pub stage2_rows: Option<usize>,
    pub heckman_error: Option<String>,
    pub distance_by_population: Vec<GroupSummary>,
    pub distance_by_k: Vec<GroupSummary>,
    pub files: Vec<PathBuf>,
}

fn provenance(config_hash: &str) -> String {
    format!("# config_hash={config_hash} tool_version={TOOL_VERSION}\n")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_text(head: &str, header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in records {
        w.write_record(&r).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input");
    format!("{head}{body}")
}

pub fn series_csv(config_hash: &str, points: &[SeriesPoint]) -> String {
    csv_text(
        &provenance(config_hash),
        &["group", "trial", "value", "sd", "gap"],
        points.iter().map(|p| {
            vec![p.group.clone(), p.trial.to_string(), fmt_opt(p.value), fmt_opt(p.sd), (p.value.is_none() as u8).to_string()]
        }),
    )
}

/// Runs the full analysis on the store in `dir`.
pub fn analyze(dir: &Path, opts: &AnalyzeOptions) -> Result<AnalyzeReport, ExperimentError> {
    let store = read_store(dir)?;
    let config_hash = store.config_hash().unwrap_or_default().to_string();
    if !opts.force {
        if store.is_mixed() {
            return Err(ExperimentError::Integrity(
                "the store mixes runs from different configurations; pass --force to analyze anyway".into(),
            ));
        }
        let manifest = Manifest::load(dir)?;
        manifest.verify(&store)?;
        if !opts.allow_partial && store.runs.len() < manifest.planned_runs {
            return Err(ExperimentError::Integrity(format!(
                "{} of {} planned runs are in the store; pass --allow-partial to analyze them",
                store.runs.len(),
                manifest.planned_runs
            )));
        }
    }
    let incomplete: Vec<&str> =
        store.runs.iter().filter(|r| !r.record.is_complete()).map(|r| r.record.run_id.as_str()).collect();
    if !incomplete.is_empty() && !opts.allow_partial {
        return Err(ExperimentError::Integrity(format!(
            "{} run(s) are incomplete (first: {}); pass --allow-partial to skip them",
            incomplete.len(),
            incomplete[0]
        )));
    }
    let runs: Vec<RunRecord> = store.runs.iter().filter(|r| r.record.is_complete()).map(|r| r.record.clone()).collect();
    let annotations = read_annotations(dir)?;
    let rows = build_rows(&runs, &annotations)?;
    let expected: usize = runs.iter().map(|r| r.trials.len()).sum();
    if rows.len() != expected {
        return Err(ExperimentError::Integrity(format!("{} rows built from {expected} trials", rows.len())));
    }
    let active_rows = rows.iter().filter(|r| r.active).count();

    let out_dir = opts.out_dir.clone().unwrap_or_else(|| dir.join("analysis"));
    std::fs::create_dir_all(&out_dir).map_err(ExperimentError::io(&out_dir))?;
    let mut files = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<(), ExperimentError> {
        let path = out_dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        files.push(path);
        Ok(())
    };

    emit(ROWS_FILE, csv_text(&provenance(&config_hash), &ROW_COLUMNS, rows.iter().map(|r| r.to_record())))?;

    let (stage2_rows, heckman_error) = match heckman(&rows) {
        Ok(h) => {
            if h.n_stage2 != active_rows {
                return Err(ExperimentError::Integrity(format!("stage 2 used {} rows, {active_rows} are active", h.n_stage2)));
            }
            emit(HECKMAN_TEXT, format!("{}{}", provenance(&config_hash), h.render_table()))?;
            let json = serde_json::json!({ "config_hash": config_hash, "tool_version": TOOL_VERSION, "result": h });
            emit(HECKMAN_JSON, serde_json::to_string_pretty(&json).expect("result serializes") + "\n")?;
            (Some(h.n_stage2), None)
        }
        Err(e) => {
            let msg = e.to_string();
            emit(HECKMAN_TEXT, format!("{}WARNING: estimation failed: {msg}\n", provenance(&config_hash)))?;
            let json = serde_json::json!({ "config_hash": config_hash, "tool_version": TOOL_VERSION, "error": msg });
            emit(HECKMAN_JSON, serde_json::to_string_pretty(&json).expect("error serializes") + "\n")?;
            (None, Some(msg))
        }
    };

    let trials = runs.iter().map(|r| r.planned_trials).max().unwrap_or(0);
    let mut obs = observations(&runs, &annotations);
    let mut baseline_obs = Vec::new();
    if let Some(path) = &opts.human_baseline {
        baseline_obs = baseline_observations(&read_baseline(path)?)?;
    }
    obs.extend(baseline_obs.iter().cloned());
    let trials = trials.max(baseline_obs.iter().map(|o| o.trial).max().unwrap_or(0));
    for (name, metric, by) in SERIES_FILES {
        // the K series describe the simulated populations only
        let points = match by {
            GroupBy::K => series(&obs[..obs.len() - baseline_obs.len()], metric, by, trials),
            GroupBy::Population => series(&obs, metric, by, trials),
        };
        emit(name, series_csv(&config_hash, &points))?;
    }

    let distance_by_population = distance_summary(&obs, GroupBy::Population);
    let distance_by_k = distance_summary(&obs[..obs.len() - baseline_obs.len()], GroupBy::K);
    let summary_rows = distance_by_population
        .iter()
        .map(|g| ("population", g))
        .chain(distance_by_k.iter().map(|g| ("k", g)))
        .map(|(by, g)| vec![by.to_string(), g.group.clone(), g.n_active.to_string(), fmt_opt(g.mean), fmt_opt(g.sd)]);
    emit(SUMMARY_FILE, csv_text(&provenance(&config_hash), &["by", "group", "n_active", "mean", "sd"], summary_rows))?;

    Ok(AnalyzeReport {
        out_dir,
        runs: runs.len(),
        rows: rows.len(),
        active_rows,
        stage2_rows,
        heckman_error,
        distance_by_population,
        distance_by_k,
        files,
    })
}
