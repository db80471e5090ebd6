//! Scripted baselines and the replay agent.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{Action, Agent, AgentError, AgentSpec, Observable};
use crate::landscape::{hamming, Configuration};
use crate::rng;

fn trial_rng(seed: u64, obs: &Observable<'_>) -> rng::Rng {
    rng::seeded(rng::derive(seed, &[obs.history.len() as u64]))
}

/// Uniformly random configuration every trial.
#[derive(Clone, Debug)]
pub struct RandomAgent {
    seed: u64,
}

impl RandomAgent {
    pub fn new(spec: &AgentSpec) -> Self {
        Self { seed: spec.agent_seed }
    }
}

impl Agent for RandomAgent {
    fn next_move(&mut self, obs: &Observable<'_>) -> Result<Action, AgentError> {
        Ok(Action::scripted(Configuration::random(obs.n, &mut trial_rng(self.seed, obs))))
    }
}

/// Local search around the best configuration found so far.
///
/// Each trial flips one random bit of the incumbent, or with probability
/// `long_jump_prob` jumps to a uniformly random configuration at distance two
/// or more. After `patience` consecutive trials without improvement it stops
/// and resubmits the incumbent for the rest of the game.
#[derive(Clone, Debug)]
pub struct LocalSearchAgent {
    seed: u64,
    long_jump_prob: f64,
    patience: Option<u32>,
}

impl LocalSearchAgent {
    pub fn new(spec: &AgentSpec) -> Self {
        Self { seed: spec.agent_seed, long_jump_prob: spec.long_jump_prob(), patience: spec.patience() }
    }
}

impl Agent for LocalSearchAgent {
    fn next_move(&mut self, obs: &Observable<'_>) -> Result<Action, AgentError> {
        let (incumbent, _, found_at) = obs.incumbent();
        let since = obs.history.len() - found_at;
        if self.patience.is_some_and(|p| since >= p as usize) {
            return Ok(Action::scripted(incumbent.clone()));
        }
        let mut r = trial_rng(self.seed, obs);
        if obs.n >= 2 && r.gen_bool(self.long_jump_prob) {
            loop {
                let c = Configuration::random(obs.n, &mut r);
                if hamming(&c, incumbent).expect("equal lengths") >= 2 {
                    return Ok(Action::scripted(c));
                }
            }
        }
        Ok(Action::scripted(incumbent.flipped(r.gen_range(0..obs.n))))
    }
}

/// First-improvement hill climbing over single-bit flips.
///
/// Bits are tried in a fixed seeded cyclic order, continuing after the bit
/// that was tried last. Once every neighbor of the incumbent has been tried
/// without improvement, the incumbent is resubmitted.
#[derive(Clone, Debug)]
pub struct HillClimbAgent {
    seed: u64,
}

impl HillClimbAgent {
    pub fn new(spec: &AgentSpec) -> Self {
        Self { seed: spec.agent_seed }
    }

    fn order(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::seeded(rng::derive(self.seed, &[0x4c])));
        order
    }
}

/// The single bit in which `c` differs from `from`, if exactly one.
fn single_flip(c: &Configuration, from: &Configuration) -> Option<usize> {
    let diff: Vec<usize> = (0..c.len()).filter(|&i| c.get(i) != from.get(i)).collect();
    (diff.len() == 1).then(|| diff[0])
}

impl Agent for HillClimbAgent {
    fn next_move(&mut self, obs: &Observable<'_>) -> Result<Action, AgentError> {
        let order = self.order(obs.n);
        let (incumbent, _, found_at) = obs.incumbent();
        let tried: Vec<usize> = obs.history[found_at..].iter().filter_map(|t| single_flip(&t.config, incumbent)).collect();
        // continue after the most recently tried bit
        let last_bit = obs.history.last().and_then(|t| {
            if t.trial == found_at {
                // the last trial became the incumbent: it flipped one bit of
                // the previous incumbent
                let prev = Observable { history: &obs.history[..obs.history.len() - 1], ..*obs };
                single_flip(&t.config, prev.incumbent().0)
            } else {
                single_flip(&t.config, incumbent)
            }
        });
        let cursor = last_bit.map_or(0, |b| order.iter().position(|&x| x == b).unwrap() + 1);
        let next = (0..obs.n).map(|i| order[(cursor + i) % obs.n]).find(|b| !tried.contains(b));
        Ok(Action::scripted(match next {
            Some(b) => incumbent.flipped(b),
            None => incumbent.clone(),
        }))
    }
}

/// Replays a recorded sequence of actions.
#[derive(Clone, Debug)]
pub struct ReplayAgent {
    actions: Vec<Action>,
}

impl ReplayAgent {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    pub fn from_run(run: &crate::game::RunRecord) -> Self {
        Self::new(run.trials.iter().map(|t| Action { config: t.config.clone(), raw_text: t.thought_text.clone() }).collect())
    }
}

impl Agent for ReplayAgent {
    fn next_move(&mut self, obs: &Observable<'_>) -> Result<Action, AgentError> {
        self.actions.get(obs.history.len()).cloned().ok_or(AgentError::ReplayExhausted(self.actions.len()))
    }
}
