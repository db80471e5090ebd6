//! The run store: one JSON object per line, grouped into per-run blocks.
//!
//! ```text
//! header                       once, first line
//! run_start                    opens a block
//! quiz | exchange | trial ...  in the order they happened
//! run_end                      closes the block
//! ```
//!
//! Blocks are appended whole and in run order, so a crash can leave at most
//! one partial block at the end of the file, which reading reports and
//! resumption truncates.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{sha256_hex, ExperimentError};
use crate::agents::{AgentSpec, Exchange, QuizOutcome};
use crate::game::{LandscapeRef, Objective, RunRecord, RunStatus, TrialRecord};
use crate::landscape::Configuration;

pub const STORE_FILE: &str = "runs.jsonl";
/// Copy of the experiment configuration kept beside the store.
pub const CONFIG_COPY: &str = "config.toml";
pub const STORE_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StoreRecord {
    Header {
        schema_version: u32,
        experiment: String,
        config_hash: String,
        tool_version: String,
    },
    RunStart {
        run_id: String,
        agent: AgentSpec,
        population: String,
        landscape: LandscapeRef,
        start_config: Configuration,
        start_payoff: f64,
        planned_trials: usize,
        objective: Objective,
    },
    Quiz {
        run_id: String,
        outcome: QuizOutcome,
    },
    Exchange {
        run_id: String,
        exchange: Exchange,
    },
    Trial {
        run_id: String,
        record: TrialRecord,
    },
    RunEnd {
        run_id: String,
        status: RunStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

impl StoreRecord {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("record serializes");
        s.push('\n');
        s
    }
}

/// A run read back from the store.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredRun {
    pub record: RunRecord,
    pub agent: AgentSpec,
    pub quiz: Option<QuizOutcome>,
    pub exchanges: Vec<Exchange>,
    pub error: Option<String>,
    /// SHA-256 of the block's bytes.
    pub block_hash: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStore {
    pub dir: PathBuf,
    /// (config hash, tool version) of every header line.
    pub headers: Vec<(String, String)>,
    pub runs: Vec<StoredRun>,
    /// Byte length of the intact prefix: header plus closed blocks.
    pub valid_len: u64,
    /// Bytes after the intact prefix (a partial block or line).
    pub trailing_bytes: u64,
}

impl RunStore {
    pub fn config_hash(&self) -> Option<&str> {
        self.headers.first().map(|h| h.0.as_str())
    }

    pub fn is_mixed(&self) -> bool {
        self.headers.iter().any(|h| h.0 != self.headers[0].0)
    }

    pub fn run_records(&self) -> Vec<RunRecord> {
        self.runs.iter().map(|r| r.record.clone()).collect()
    }
}

struct Open {
    run: StoredRun,
    start: usize,
}

/// Reads and validates a store. A trailing partial block is tolerated and
/// reported through `trailing_bytes`; anything malformed before it is a
/// format error naming the line.
pub fn read_store(dir: &Path) -> Result<RunStore, ExperimentError> {
    let path = dir.join(STORE_FILE);
    let bytes = std::fs::read(&path).map_err(ExperimentError::io(&path))?;
    let fmt = |line: usize, message: String| ExperimentError::Format { path: path.clone(), line, message };
    let mut store = RunStore { dir: dir.to_path_buf(), ..Default::default() };
    let mut open: Option<Open> = None;
    let mut offset = 0usize;
    let lines: Vec<&[u8]> = bytes.split_inclusive(|&b| b == b'\n').collect();
    for (i, raw) in lines.iter().enumerate() {
        let lineno = i + 1;
        let line_start = offset;
        offset += raw.len();
        if !raw.ends_with(b"\n") {
            // torn final line
            break;
        }
        let text = std::str::from_utf8(raw).map_err(|e| fmt(lineno, e.to_string()))?;
        let rec: StoreRecord = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) => return Err(fmt(lineno, e.to_string())),
        };
        match rec {
            StoreRecord::Header { schema_version, config_hash, tool_version, .. } => {
                if schema_version != STORE_SCHEMA {
                    return Err(fmt(lineno, format!("store schema {schema_version}, expected {STORE_SCHEMA}")));
                }
                if open.is_some() {
                    return Err(fmt(lineno, "header inside a run block".into()));
                }
                store.headers.push((config_hash, tool_version));
                store.valid_len = offset as u64;
            }
            StoreRecord::RunStart { run_id, agent, population, landscape, start_config, start_payoff, planned_trials, objective } => {
                if store.headers.is_empty() {
                    return Err(fmt(lineno, "run block before the header".into()));
                }
                if let Some(o) = &open {
                    return Err(fmt(lineno, format!("run {} opened while {} is still open", run_id, o.run.record.run_id)));
                }
                if store.runs.iter().any(|r| r.record.run_id == run_id) {
                    return Err(fmt(lineno, format!("duplicate run {run_id}")));
                }
                open = Some(Open {
                    run: StoredRun {
                        record: RunRecord {
                            run_id,
                            agent_label: agent.population_label(),
                            population: population.clone(),
                            landscape,
                            start_config,
                            start_payoff,
                            planned_trials,
                            trials: Vec::new(),
                            objective,
                            status: RunStatus::Complete,
                        },
                        agent,
                        quiz: None,
                        exchanges: Vec::new(),
                        error: None,
                        block_hash: String::new(),
                    },
                    start: line_start,
                });
            }
            StoreRecord::Quiz { run_id, outcome } => {
                let o = expect_open(&mut open, &run_id).map_err(|m| fmt(lineno, m))?;
                o.run.quiz = Some(outcome);
            }
            StoreRecord::Exchange { run_id, exchange } => {
                let o = expect_open(&mut open, &run_id).map_err(|m| fmt(lineno, m))?;
                o.run.exchanges.push(exchange);
            }
            StoreRecord::Trial { run_id, record } => {
                let o = expect_open(&mut open, &run_id).map_err(|m| fmt(lineno, m))?;
                if record.trial != o.run.record.trials.len() + 1 {
                    return Err(fmt(lineno, format!("run {run_id}: trial {} out of order", record.trial)));
                }
                o.run.record.trials.push(record);
            }
            StoreRecord::RunEnd { run_id, status, error } => {
                expect_open(&mut open, &run_id).map_err(|m| fmt(lineno, m))?;
                let Open { mut run, start } = open.take().unwrap();
                run.record.status = status;
                run.error = error;
                run.block_hash = sha256_hex(&bytes[start..offset]);
                if status == RunStatus::Complete {
                    run.record.verify().map_err(|e| fmt(lineno, format!("run {run_id}: {e}")))?;
                }
                store.runs.push(run);
                store.valid_len = offset as u64;
            }
        }
    }
    if store.headers.is_empty() && !bytes.is_empty() && bytes.ends_with(b"\n") {
        return Err(fmt(1, "missing header".into()));
    }
    store.trailing_bytes = bytes.len() as u64 - store.valid_len;
    Ok(store)
}

fn expect_open<'a>(open: &'a mut Option<Open>, run_id: &str) -> Result<&'a mut Open, String> {
    match open {
        Some(o) if o.run.record.run_id != run_id => Err(format!("record for {run_id} inside block of {}", o.run.record.run_id)),
        Some(o) => Ok(o),
        None => Err(format!("record for {run_id} outside any run block")),
    }
}

/// Hash of the store content with timing fields removed, for comparing
/// two executions of the same experiment.
pub fn store_digest(dir: &Path) -> Result<String, ExperimentError> {
    let path = dir.join(STORE_FILE);
    let text = std::fs::read_to_string(&path).map_err(ExperimentError::io(&path))?;
    let mut canonical = String::new();
    for (i, line) in text.lines().enumerate() {
        let mut v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| ExperimentError::Format { path: path.clone(), line: i + 1, message: e.to_string() })?;
        strip_timing(&mut v);
        canonical.push_str(&v.to_string());
        canonical.push('\n');
    }
    Ok(sha256_hex(canonical.as_bytes()))
}

fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|k, _| k != "elapsed_ms" && !k.ends_with("_at"));
            m.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}
