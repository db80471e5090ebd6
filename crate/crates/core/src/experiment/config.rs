use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, ExperimentError};
use crate::agents::{AgentKind, Framing, PopulationMix};
use crate::game::{Objective, DEFAULT_TRIALS};
use crate::landscape::MAX_EXHAUSTIVE_N;
use crate::llm_client::ProviderConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    pub n: usize,
    pub k: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationMode {
    #[default]
    Heuristic,
    /// LLM labeling, falling back to the heuristic on format errors.
    Llm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnnotationConfig {
    #[serde(default)]
    pub mode: AnnotationMode,
    /// Provider label used for LLM labeling.
    #[serde(default)]
    pub provider: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub framing: Framing,
    #[serde(default)]
    pub think_aloud: bool,
    /// Give LLM agents the comprehension quiz before the game.
    #[serde(default = "default_true")]
    pub quiz: bool,
    #[serde(default = "default_true")]
    pub quiz_retest: bool,
    pub master_seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub landscape: LandscapeSpec,
    pub population: PopulationMix,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderConfig>,
    #[serde(default)]
    pub annotation: AnnotationConfig,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_true() -> bool {
    true
}
fn default_parallelism() -> usize {
    1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(ExperimentError::io(path))?;
        Self::parse(&text).map_err(|e| match e {
            ExperimentError::Config(m) => ExperimentError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return bad(format!("name {:?} must be non-empty and use only letters, digits, '-', '_' or '.'", self.name));
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        let l = &self.landscape;
        if l.n == 0 || l.n > MAX_EXHAUSTIVE_N {
            return bad(format!("landscape n = {} outside 1..={MAX_EXHAUSTIVE_N}", l.n));
        }
        if l.k.is_empty() {
            return bad("landscape k list is empty".into());
        }
        for (i, &k) in l.k.iter().enumerate() {
            if k >= l.n {
                return bad(format!("landscape k = {k} must be below n = {}", l.n));
            }
            if l.k[..i].contains(&k) {
                return bad(format!("landscape k = {k} listed twice"));
            }
        }
        self.population.validate()?;
        let templates = std::iter::once(&self.population.base.template).chain(self.population.extras.iter().map(|e| &e.template));
        for t in templates {
            if t.kind == AgentKind::Llm && !self.providers.contains_key(&t.model_label) {
                return bad(format!("no provider configured for model label {:?}", t.model_label));
            }
        }
        for (label, p) in &self.providers {
            p.validate().map_err(|e| ExperimentError::Config(format!("provider {label:?}: {e}")))?;
        }
        if self.annotation.mode == AnnotationMode::Llm {
            match &self.annotation.provider {
                Some(p) if self.providers.contains_key(p) => {}
                Some(p) => return bad(format!("annotation provider {p:?} is not configured")),
                None => return bad("LLM annotation needs annotation.provider".into()),
            }
        }
        Ok(())
    }

    /// Hash of the settings that determine results. The output directory
    /// and the parallelism cap are left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        canonical.parallelism = 1;
        sha256_hex(serde_json::to_string(&canonical).expect("config serializes").as_bytes())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
schema_version = 1
name = "demo"
master_seed = 7
think_aloud = true

[landscape]
n = 10
k = [0, 5, 9]
seed = 42

[population.base]
count = 3
template = { kind = "llm", model_label = "sim" }

[[population.extras]]
fraction = 0.34
template = { kind = "hill_climb" }

[providers.sim]
kind = "mock"
mock_seed = 3
"#;

    #[test]
    fn sample_parses_with_defaults() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.trials, 24);
        assert_eq!(c.objective, Objective::Wealth);
        assert_eq!(c.population.size(), 4);
        assert!(c.quiz);
    }

    #[test]
    fn hash_ignores_output_dir_and_parallelism() {
        let a = ExperimentConfig::parse(SAMPLE).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        b.parallelism = 8;
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 8;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(ExperimentConfig::parse(&a.to_toml()).unwrap(), a);
    }

    #[test]
    fn invalid_configs_are_named() {
        let cases = [
            (SAMPLE.replace("k = [0, 5, 9]", "k = [0, 12]"), "k = 12"),
            (SAMPLE.replace("schema_version = 1", "schema_version = 2"), "schema_version"),
            (SAMPLE.replace("[providers.sim]", "[providers.other]"), "\"sim\""),
            (SAMPLE.replace("count = 3", "count = 0"), "count"),
            (SAMPLE.replace("think_aloud = true", "think_aloud = true\nbogus = 1"), "bogus"),
            (SAMPLE.replace("name = \"demo\"", "name = \"a/b\""), "name"),
        ];
        for (text, needle) in cases {
            let e = ExperimentConfig::parse(&text).unwrap_err().to_string();
            assert!(e.contains(needle), "{e} should mention {needle}");
        }
    }
}
