//! The trial protocol: submissions, payoff feedback, wealth accumulation and
//! the per-run search metrics derived from a finished game.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::{hamming, Configuration, Landscape, LandscapeError};
use crate::rng;

pub const DEFAULT_TRIALS: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("state error: {0}")]
    State(String),
}

impl From<LandscapeError> for GameError {
    fn from(e: LandscapeError) -> Self {
        GameError::Parameter(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximize accumulated wealth over all trials.
    #[default]
    Wealth,
    /// Find the highest-paying configuration.
    Peak,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    AbortedParse,
    AbortedProvider,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub config: Configuration,
    pub payoff: f64,
    pub wealth: f64,
    pub distance: usize,
    pub active: bool,
    #[serde(default)]
    pub thought_text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRef {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

impl LandscapeRef {
    pub fn of(landscape: &Landscape) -> Self {
        Self { n: landscape.n(), k: landscape.k(), seed: landscape.seed() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub agent_label: String,
    /// Population label the agent was sampled under (the model label for LLM
    /// agents, the kind for scripted ones).
    pub population: String,
    pub landscape: LandscapeRef,
    pub start_config: Configuration,
    pub start_payoff: f64,
    pub planned_trials: usize,
    pub trials: Vec<TrialRecord>,
    pub objective: Objective,
    pub status: RunStatus,
}

/// What the game reports back after a submission.
#[derive(Clone, Debug, PartialEq)]
pub struct Feedback {
    pub payoff: f64,
    pub wealth: f64,
    pub trial_index: usize,
    pub best_payoff: f64,
}

/// A single game in progress. Owned by one run loop.
#[derive(Clone, Debug)]
pub struct GameState<'a> {
    landscape: &'a Landscape,
    trials: usize,
    start_config: Configuration,
    start_payoff: f64,
    history: Vec<TrialRecord>,
    best: (Configuration, f64),
}

impl<'a> GameState<'a> {
    /// Opens a game with a uniformly random start configuration drawn from
    /// `game_seed`. The start payoff is disclosed but is not income.
    pub fn new(landscape: &'a Landscape, game_seed: u64, trials: usize) -> Result<Self, GameError> {
        let start = Configuration::random(landscape.n(), &mut rng::seeded(game_seed));
        Self::with_start(landscape, start, trials)
    }

    pub fn with_start(landscape: &'a Landscape, start: Configuration, trials: usize) -> Result<Self, GameError> {
        if trials == 0 {
            return Err(GameError::Parameter("a game needs at least one trial".into()));
        }
        let start_payoff = landscape.payoff_points(&start)?;
        Ok(Self {
            landscape,
            trials,
            best: (start.clone(), start_payoff),
            start_config: start,
            start_payoff,
            history: Vec::with_capacity(trials),
        })
    }

    pub fn landscape(&self) -> &Landscape {
        self.landscape
    }

    pub fn start_config(&self) -> &Configuration {
        &self.start_config
    }

    pub fn start_payoff(&self) -> f64 {
        self.start_payoff
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn history(&self) -> &[TrialRecord] {
        &self.history
    }

    pub fn wealth(&self) -> f64 {
        self.history.last().map_or(0.0, |t| t.wealth)
    }

    pub fn remaining(&self) -> usize {
        self.trials - self.history.len()
    }

    pub fn is_closed(&self) -> bool {
        self.history.len() >= self.trials
    }

    pub fn submit(&mut self, config: Configuration, thought_text: String) -> Result<Feedback, GameError> {
        if self.is_closed() {
            return Err(GameError::Protocol(format!("submission after the final trial {}", self.trials)));
        }
        let payoff = self.landscape.payoff_points(&config)?;
        let distance = hamming(&config, &self.best.0)?;
        let wealth = self.wealth() + payoff;
        let trial = self.history.len() + 1;
        if payoff > self.best.1 {
            self.best = (config.clone(), payoff);
        }
        self.history.push(TrialRecord { trial, config, payoff, wealth, distance, active: distance > 0, thought_text });
        Ok(Feedback { payoff, wealth, trial_index: trial, best_payoff: self.best.1 })
    }

    pub fn into_record(
        self,
        run_id: String,
        agent_label: String,
        population: String,
        objective: Objective,
        status: RunStatus,
    ) -> RunRecord {
        RunRecord {
            run_id,
            agent_label,
            population,
            landscape: LandscapeRef::of(self.landscape),
            start_config: self.start_config,
            start_payoff: self.start_payoff,
            planned_trials: self.trials,
            trials: self.history,
            objective,
            status,
        }
    }
}

/// Index into `trials` of the best configuration known before trial `t`
/// (1-based), or `None` when that is the start configuration. Ties go to the
/// earliest.
fn best_prior(run: &RunRecord, t: usize) -> (Option<usize>, &Configuration) {
    let mut best = (None, &run.start_config, run.start_payoff);
    for (i, tr) in run.trials[..t - 1].iter().enumerate() {
        if tr.payoff > best.2 {
            best = (Some(i), &tr.config, tr.payoff);
        }
    }
    (best.0, best.1)
}

impl RunRecord {
    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete && self.trials.len() == self.planned_trials
    }

    fn check_trial(&self, t: usize) -> Result<(), GameError> {
        if t == 0 || t > self.trials.len() {
            return Err(GameError::Parameter(format!("trial {t} outside 1..={}", self.trials.len())));
        }
        Ok(())
    }

    /// Hamming distance from trial `t`'s configuration to the best
    /// configuration known before it.
    pub fn search_distance(&self, t: usize) -> Result<usize, GameError> {
        self.check_trial(t)?;
        Ok(hamming(&self.trials[t - 1].config, best_prior(self, t).1)?)
    }

    pub fn is_active(&self, t: usize) -> Result<bool, GameError> {
        if !self.is_complete() {
            return Err(GameError::State(format!("run {} is not complete", self.run_id)));
        }
        Ok(self.search_distance(t)? > 0)
    }

    /// First trial of the inactive tail, or `None` if the last trial is
    /// active.
    pub fn stop_trial(&self) -> Result<Option<usize>, GameError> {
        if !self.is_complete() {
            return Err(GameError::State(format!("run {} is not complete", self.run_id)));
        }
        let mut stop = None;
        for t in (1..=self.trials.len()).rev() {
            if self.is_active(t)? {
                break;
            }
            stop = Some(t);
        }
        Ok(stop)
    }

    pub fn final_wealth(&self) -> f64 {
        self.trials.last().map_or(0.0, |t| t.wealth)
    }

    pub fn best_payoff(&self) -> f64 {
        self.trials.iter().map(|t| t.payoff).fold(self.start_payoff, f64::max)
    }

    /// Checks the logged per-trial fields against the definitions: wealth
    /// accumulates payoffs, distance is measured to the best prior and
    /// activity is `distance > 0`.
    pub fn verify(&self) -> Result<(), GameError> {
        let mut wealth = 0.0;
        for (i, tr) in self.trials.iter().enumerate() {
            let t = i + 1;
            wealth += tr.payoff;
            let expect = self.search_distance(t)?;
            if tr.trial != t || tr.distance != expect || tr.active != (expect > 0) || tr.wealth != wealth {
                return Err(GameError::State(format!("run {} trial {t} is inconsistent with its history", self.run_id)));
            }
        }
        Ok(())
    }
}
