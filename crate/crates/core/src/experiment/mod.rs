//! Experiment orchestration: configuration, the run store, execution,
//! annotation of stored runs and analysis outputs.

mod analyze;
mod annotate_store;
mod baseline;
mod config;
mod manifest;
mod runner;
mod store;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use analyze::{analyze, series_csv, AnalyzeOptions, AnalyzeReport, HECKMAN_JSON, HECKMAN_TEXT, ROWS_FILE, SERIES_FILES, SUMMARY_FILE};
pub use annotate_store::{annotate_store, read_annotations, AnnotateReport, ANNOTATIONS_FILE};
pub use baseline::{baseline_observations, read_baseline, BaselineRecord, BASELINE_COLUMNS, BASELINE_POPULATION};
pub use config::{AnnotationConfig, AnnotationMode, ExperimentConfig, LandscapeSpec, SCHEMA_VERSION};
pub use manifest::{LedgerEntry, Manifest, MANIFEST_FILE};
pub use runner::{run_experiment, RunSummary};
pub use store::{read_store, store_digest, StoreRecord, StoredRun, RunStore, CONFIG_COPY, STORE_FILE};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}:{line}: {message}", .path.display())]
    Format { path: PathBuf, line: usize, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Landscape(#[from] crate::landscape::LandscapeError),
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
    #[error(transparent)]
    Llm(#[from] crate::llm_client::LlmError),
    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| ExperimentError::Io { path: path.to_path_buf(), source }
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(ExperimentError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(ExperimentError::io(path))
}
