//! Provenance manifest with a hash-chained ledger of committed runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::store::RunStore;
use super::{sha256_hex, write_atomic, ExperimentError, TOOL_VERSION};
use crate::game::RunStatus;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Recorded in every manifest.
pub const PROTOCOL_NOTES: [&str; 3] = [
    "instruction templates and quiz items are reconstructions, not the original experiment texts",
    "the start configuration and its payoff are disclosed before trial 1",
    "landscapes are freshly generated from the configured seed, one per K",
];
const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub run_id: String,
    pub status: RunStatus,
    pub trials: usize,
    pub block_sha256: String,
    /// sha256(previous chain ‖ block hash); the first entry chains from zeros.
    pub chain: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    /// Hashes of the bundled text fixtures that shape prompts and labels.
    pub fixture_hashes: BTreeMap<String, String>,
    /// Protocol choices that readers of the store should know about.
    #[serde(default)]
    pub notes: Vec<String>,
    pub rng: String,
    pub tool_version: String,
    pub planned_runs: usize,
    pub started_at: u64,
    pub updated_at: u64,
    #[serde(default)]
    pub finished_at: Option<u64>,
    pub ledger: Vec<LedgerEntry>,
}

pub(crate) fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn link(prev: &str, block: &str) -> String {
    sha256_hex(format!("{prev}{block}").as_bytes())
}

impl Manifest {
    pub fn new(experiment: &str, config_hash: &str, fixture_hashes: BTreeMap<String, String>, planned_runs: usize) -> Self {
        let t = now();
        Self {
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            fixture_hashes,
            notes: PROTOCOL_NOTES.iter().map(|s| s.to_string()).collect(),
            rng: crate::rng::RNG_ALGORITHM.into(),
            tool_version: TOOL_VERSION.into(),
            planned_runs,
            started_at: t,
            updated_at: t,
            finished_at: None,
            ledger: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self, ExperimentError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(ExperimentError::io(&path))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Format { path, line: e.line(), message: e.to_string() })
    }

    pub fn save(&mut self, dir: &Path) -> Result<(), ExperimentError> {
        self.updated_at = now();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn append(&mut self, run_id: &str, status: RunStatus, trials: usize, block_sha256: &str) {
        let prev = self.ledger.last().map_or(GENESIS, |e| e.chain.as_str());
        let chain = link(prev, block_sha256);
        self.ledger.push(LedgerEntry { run_id: run_id.into(), status, trials, block_sha256: block_sha256.into(), chain });
    }

    /// Checks the chain and that the ledger lists exactly the store's
    /// closed blocks, in order.
    pub fn verify(&self, store: &RunStore) -> Result<(), ExperimentError> {
        let mut prev = GENESIS.to_string();
        for (i, e) in self.ledger.iter().enumerate() {
            let expect = link(&prev, &e.block_sha256);
            if expect != e.chain {
                return Err(ExperimentError::Integrity(format!("manifest ledger chain broken at entry {} ({})", i + 1, e.run_id)));
            }
            prev = e.chain.clone();
        }
        if self.ledger.len() != store.runs.len() {
            return Err(ExperimentError::Integrity(format!(
                "manifest lists {} runs but the store holds {}",
                self.ledger.len(),
                store.runs.len()
            )));
        }
        for (e, r) in self.ledger.iter().zip(&store.runs) {
            if e.run_id != r.record.run_id || e.block_sha256 != r.block_hash || e.status != r.record.status {
                return Err(ExperimentError::Integrity(format!("run {} differs from its manifest entry", r.record.run_id)));
            }
        }
        Ok(())
    }

    /// Rebuilds the ledger from the store, keeping the existing prefix when it
    /// agrees. Used after a crash between a store append and the manifest
    /// update; a disagreeing prefix means the store was edited.
    pub fn reconcile(&mut self, store: &RunStore) -> Result<(), ExperimentError> {
        if self.ledger.len() > store.runs.len() {
            return Err(ExperimentError::Integrity(format!(
                "manifest lists {} runs but the store holds only {}",
                self.ledger.len(),
                store.runs.len()
            )));
        }
        let committed = self.ledger.len();
        let mut prefix = self.clone();
        prefix.ledger.truncate(committed);
        let head = RunStore { runs: store.runs[..committed].to_vec(), ..store.clone() };
        prefix.verify(&head)?;
        for r in &store.runs[committed..] {
            self.append(&r.record.run_id, r.record.status, r.record.trials.len(), &r.block_hash);
        }
        Ok(())
    }
}
