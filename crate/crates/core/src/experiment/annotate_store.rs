//! Attention annotations for every stored trial, kept in a sidecar file.
//!
//! Each record carries the hash of the fixtures that produced it (lexicon,
//! rubric, classifier mode and model), so re-annotation only rewrites
//! records whose fixtures changed.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{AnnotationMode, ExperimentConfig};
use super::store::{read_store, CONFIG_COPY};
use super::{sha256_hex, write_atomic, ExperimentError, TOOL_VERSION};
use crate::agents::Quiz;
use crate::annotate::{annotate, ClassifierKind, ClassifyMode, Lexicon, ThoughtAnnotation};
use crate::landscape::symbol_names;
use crate::llm_client::{
    ChatProvider, HttpProvider, LlmClient, ProviderConfig, ProviderKind, Rubric, ScriptedProvider, SimulatedParticipant,
};

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum AnnotationRecord {
    Header {
        config_hash: String,
        tool_version: String,
    },
    Annotation {
        fixture_hash: String,
        annotation: ThoughtAnnotation,
    },
}

impl AnnotationRecord {
    fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("record serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotateReport {
    pub trials: usize,
    /// Records created for trials that had none.
    pub written: usize,
    /// Existing records replaced because their fixture hash changed.
    pub rewritten: usize,
    pub unchanged: usize,
    pub empty_text: usize,
    /// LLM labelings that fell back to the heuristic.
    pub fallbacks: usize,
}

fn read_records(dir: &Path) -> Result<Vec<AnnotationRecord>, ExperimentError> {
    let path = dir.join(ANNOTATIONS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path).map_err(ExperimentError::io(&path))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ExperimentError::Format { path: path.clone(), line: i + 1, message: e.to_string() })
        })
        .collect()
}

/// Annotations stored beside a run store; empty when none were made yet.
pub fn read_annotations(dir: &Path) -> Result<Vec<ThoughtAnnotation>, ExperimentError> {
    Ok(read_records(dir)?
        .into_iter()
        .filter_map(|r| match r {
            AnnotationRecord::Annotation { annotation, .. } => Some(annotation),
            AnnotationRecord::Header { .. } => None,
        })
        .collect())
}

fn provider_for(cfg: &ProviderConfig, n: usize) -> Result<Arc<dyn ChatProvider>, ExperimentError> {
    Ok(match cfg.kind {
        ProviderKind::Openai => Arc::new(HttpProvider::from_config(cfg)?),
        ProviderKind::Mock => Arc::new(SimulatedParticipant::new(cfg.mock_seed, n, Quiz::default().key())),
        ProviderKind::Script => Arc::new(ScriptedProvider::from_file(Path::new(cfg.script_path.as_deref().unwrap_or_default()))?),
    })
}

/// Annotates every trial of the store in `dir`. `mode` overrides the mode
/// recorded in the stored configuration.
pub fn annotate_store(dir: &Path, mode: Option<AnnotationMode>) -> Result<AnnotateReport, ExperimentError> {
    let store = read_store(dir)?;
    let cfg = ExperimentConfig::load(&dir.join(CONFIG_COPY))?;
    let mode = mode.unwrap_or(cfg.annotation.mode);
    let lexicon = Lexicon::default();
    let rubric = Rubric::default();

    let llm = match mode {
        AnnotationMode::Heuristic => None,
        AnnotationMode::Llm => {
            let label = cfg
                .annotation
                .provider
                .as_ref()
                .ok_or_else(|| ExperimentError::Config("LLM annotation needs annotation.provider".into()))?;
            let pcfg = cfg
                .providers
                .get(label)
                .ok_or_else(|| ExperimentError::Config(format!("annotation provider {label:?} is not configured")))?
                .clone();
            let provider = provider_for(&pcfg, cfg.landscape.n)?;
            Some((LlmClient::new(provider, Arc::new(crate::llm_client::Limiter::new(cfg.parallelism))), pcfg))
        }
    };
    let fixture_hash = match &llm {
        None => sha256_hex(format!("heuristic\0{}", lexicon.hash()).as_bytes()),
        Some((_, p)) => sha256_hex(format!("llm\0{}\0{}\0{}\0{:?}", lexicon.hash(), rubric.hash(), p.model, p.temperature).as_bytes()),
    };
    let classify_mode = match &llm {
        None => ClassifyMode::Heuristic,
        Some((client, pcfg)) => ClassifyMode::Llm { client, cfg: pcfg, rubric: &rubric },
    };

    let mut existing: HashMap<(String, usize), (String, ThoughtAnnotation)> = HashMap::new();
    let mut header_matches = false;
    for r in read_records(dir)? {
        match r {
            AnnotationRecord::Header { config_hash, tool_version } => {
                header_matches = Some(config_hash.as_str()) == store.config_hash() && tool_version == TOOL_VERSION;
            }
            AnnotationRecord::Annotation { fixture_hash, annotation } => {
                existing.insert((annotation.run_id.clone(), annotation.trial), (fixture_hash, annotation));
            }
        }
    }

    let mut report = AnnotateReport::default();
    let mut records = vec![AnnotationRecord::Header {
        config_hash: store.config_hash().unwrap_or_default().to_string(),
        tool_version: TOOL_VERSION.into(),
    }];
    for run in &store.runs {
        let symbols = symbol_names(run.record.landscape.n);
        for t in &run.record.trials {
            report.trials += 1;
            let key = (run.record.run_id.clone(), t.trial);
            let annotation = match existing.remove(&key) {
                Some((h, a)) if h == fixture_hash => {
                    report.unchanged += 1;
                    a
                }
                previous => {
                    if previous.is_some() {
                        report.rewritten += 1;
                    } else {
                        report.written += 1;
                    }
                    annotate(&run.record.run_id, t.trial, &t.thought_text, &symbols, &classify_mode, &lexicon)
                }
            };
            report.empty_text += annotation.empty_text as usize;
            report.fallbacks += (annotation.fallback_reason.is_some() && annotation.classifier == ClassifierKind::Heuristic) as usize;
            records.push(AnnotationRecord::Annotation { fixture_hash: fixture_hash.clone(), annotation });
        }
    }
    // records of runs no longer in the store are dropped as well
    if report.written + report.rewritten > 0 || !existing.is_empty() || !header_matches {
        let text: String = records.iter().map(AnnotationRecord::to_line).collect();
        write_atomic(&dir.join(ANNOTATIONS_FILE), text.as_bytes())?;
    }
    Ok(report)
}
