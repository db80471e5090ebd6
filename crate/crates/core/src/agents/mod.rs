//! Agents that choose one configuration per trial.
//!
//! Scripted agents are pure functions of their seed and the observable game
//! history, so replaying a history always reproduces the same action. LLM
//! agents keep the chat transcript as their only state.

mod llm;
mod population;
mod scripted;
pub mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameState, Objective, RunStatus, TrialRecord};
use crate::landscape::Configuration;
use crate::llm_client::{LlmError, ParseError};

pub use llm::{Exchange, ExchangePhase, LlmAgent, LlmSetup, QuizOutcome};
pub use population::{sample_population, ExtraEntry, PopulationEntry, PopulationMix};
pub use scripted::{HillClimbAgent, LocalSearchAgent, RandomAgent, ReplayAgent};
pub use templates::{render_instructions, Framing, Quiz};

pub const DEFAULT_LONG_JUMP: f64 = 0.1;
pub const DEFAULT_PATIENCE: u32 = 3;
pub const DEFAULT_PARSE_RETRIES: u32 = 3;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("unparseable answer after {attempts} attempt(s): {last}")]
    Parse { attempts: u32, last: ParseError },
    #[error("provider failure: {0}")]
    Provider(#[from] LlmError),
    #[error("replay exhausted after {0} actions")]
    ReplayExhausted(usize),
}

impl AgentError {
    /// Run status recorded when this error ends a run.
    pub fn abort_status(&self) -> RunStatus {
        match self {
            AgentError::Provider(_) => RunStatus::AbortedProvider,
            _ => RunStatus::AbortedParse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Llm,
    LocalSearch,
    HillClimb,
    Random,
    Replay,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Llm => "llm",
            AgentKind::LocalSearch => "local_search",
            AgentKind::HillClimb => "hill_climb",
            AgentKind::Random => "random",
            AgentKind::Replay => "replay",
        }
    }
}

/// Where a replay agent takes its actions from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySource {
    /// Run store directory.
    pub store: String,
    pub run_id: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_jump_prob: Option<f64>,
    /// Consecutive non-improving trials before a local searcher stops.
    /// Zero disables stopping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub think_aloud: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub framing: Option<Framing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quiz_retest: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_from: Option<ReplaySource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: AgentKind,
    #[serde(default)]
    pub model_label: String,
    #[serde(default)]
    pub params: AgentParams,
    #[serde(default)]
    pub agent_seed: u64,
}

impl AgentSpec {
    pub fn scripted(kind: AgentKind, agent_seed: u64) -> Self {
        Self { kind, model_label: String::new(), params: AgentParams::default(), agent_seed }
    }

    pub fn llm(model_label: impl Into<String>, agent_seed: u64) -> Self {
        Self { kind: AgentKind::Llm, model_label: model_label.into(), params: AgentParams::default(), agent_seed }
    }

    /// Grouping label: the model label for LLM agents, the kind otherwise.
    pub fn population_label(&self) -> String {
        if self.kind == AgentKind::Llm || !self.model_label.is_empty() {
            self.model_label.clone()
        } else {
            self.kind.name().to_string()
        }
    }

    pub fn long_jump_prob(&self) -> f64 {
        self.params.long_jump_prob.unwrap_or(DEFAULT_LONG_JUMP)
    }

    pub fn patience(&self) -> Option<u32> {
        match self.params.patience.unwrap_or(DEFAULT_PATIENCE) {
            0 => None,
            p => Some(p),
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let p = &self.params;
        let bad = |m: String| Err(AgentError::Parameter(m));
        if let Some(q) = p.long_jump_prob {
            if !(0.0..=1.0).contains(&q) {
                return bad(format!("long_jump_prob {q} outside [0, 1]"));
            }
            if self.kind != AgentKind::LocalSearch {
                return bad(format!("long_jump_prob does not apply to {}", self.kind.name()));
            }
        }
        if p.patience.is_some() && self.kind != AgentKind::LocalSearch {
            return bad(format!("patience does not apply to {}", self.kind.name()));
        }
        let llm_only = p.temperature.is_some() || p.parse_retries.is_some() || p.quiz_retest.is_some();
        if llm_only && self.kind != AgentKind::Llm {
            return bad(format!("LLM settings given for a {} agent", self.kind.name()));
        }
        if let Some(t) = p.temperature {
            if !(0.0..=2.0).contains(&t) {
                return bad(format!("temperature {t} outside [0, 2]"));
            }
        }
        match self.kind {
            AgentKind::Llm if self.model_label.is_empty() => bad("LLM agents need a model_label".into()),
            AgentKind::Replay if p.replay_from.is_none() => bad("replay agents need replay_from".into()),
            _ => Ok(()),
        }
    }
}

/// Everything an agent may see before choosing its next configuration.
#[derive(Clone, Copy, Debug)]
pub struct Observable<'a> {
    pub n: usize,
    pub start: &'a Configuration,
    pub start_payoff: f64,
    pub history: &'a [TrialRecord],
    pub trials_remaining: usize,
    pub objective: Objective,
}

impl<'a> Observable<'a> {
    pub fn of(game: &'a GameState<'_>, objective: Objective) -> Self {
        Self {
            n: game.landscape().n(),
            start: game.start_config(),
            start_payoff: game.start_payoff(),
            history: game.history(),
            trials_remaining: game.remaining(),
            objective,
        }
    }

    /// Best configuration seen so far (earliest on ties) and the number of
    /// trials that produced it (0 for the start).
    pub fn incumbent(&self) -> (&'a Configuration, f64, usize) {
        let mut best = (self.start, self.start_payoff, 0);
        for t in self.history {
            if t.payoff > best.1 {
                best = (&t.config, t.payoff, t.trial);
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub config: Configuration,
    /// Full model output; empty for scripted agents.
    pub raw_text: String,
}

impl Action {
    pub fn scripted(config: Configuration) -> Self {
        Self { config, raw_text: String::new() }
    }
}

pub trait Agent: Send {
    fn next_move(&mut self, obs: &Observable<'_>) -> Result<Action, AgentError>;

    /// Provider exchanges since the last call, for logging.
    fn take_exchanges(&mut self) -> Vec<Exchange> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_per_kind() {
        assert!(AgentSpec::llm("", 1).validate().is_err());
        assert!(AgentSpec::llm("gpt", 1).validate().is_ok());
        let mut s = AgentSpec::scripted(AgentKind::LocalSearch, 1);
        s.params.long_jump_prob = Some(1.5);
        assert!(s.validate().is_err());
        s.params.long_jump_prob = Some(0.5);
        assert!(s.validate().is_ok());
        let mut h = AgentSpec::scripted(AgentKind::HillClimb, 1);
        h.params.temperature = Some(1.0);
        assert!(h.validate().is_err());
        assert!(AgentSpec::scripted(AgentKind::Replay, 1).validate().is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(AgentSpec::llm("gpt-4o", 0).population_label(), "gpt-4o");
        assert_eq!(AgentSpec::scripted(AgentKind::HillClimb, 0).population_label(), "hill_climb");
    }

    #[test]
    fn patience_zero_disables_stopping() {
        let mut s = AgentSpec::scripted(AgentKind::LocalSearch, 0);
        assert_eq!(s.patience(), Some(DEFAULT_PATIENCE));
        s.params.patience = Some(0);
        assert_eq!(s.patience(), None);
    }
}
