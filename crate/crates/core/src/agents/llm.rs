use serde::{Deserialize, Serialize};

use super::templates::{render_feedback, render_format_reminder, render_instructions, render_start, Framing, Quiz};
use super::{Action, Agent, AgentError, AgentSpec, Observable, DEFAULT_PARSE_RETRIES};
use crate::game::{Feedback, Objective};
use crate::landscape::symbol_names;
use crate::llm_client::{parse_configuration, ChatMessage, LlmClient, LlmError, ProviderConfig, Usage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExchangePhase {
    Quiz,
    Trial,
    Reprompt,
}

/// One request/response pair, logged with only the messages it appended to
/// the transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub phase: ExchangePhase,
    /// Trial the exchange belongs to; 0 before the game starts.
    pub trial: usize,
    /// Attempt number within the phase, from 1.
    pub attempt: u32,
    pub appended: Vec<ChatMessage>,
    pub response: Option<String>,
    pub usage: Option<Usage>,
    pub retries: u32,
    pub elapsed_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuizOutcome {
    pub passed: bool,
    pub attempts: u32,
    /// Answers read from each attempt, one letter (or none) per question.
    pub answers: Vec<Vec<Option<char>>>,
}

/// Game-level settings an LLM agent needs to render its messages.
#[derive(Clone, Debug, PartialEq)]
pub struct LlmSetup {
    pub framing: Framing,
    pub think_aloud: bool,
    pub objective: Objective,
    pub trials: usize,
    pub n: usize,
}

/// An agent backed by a chat model. The transcript is its only memory.
pub struct LlmAgent {
    client: LlmClient,
    cfg: ProviderConfig,
    objective: Objective,
    symbols: Vec<String>,
    parse_retries: u32,
    transcript: Vec<ChatMessage>,
    /// Instructions waiting to be prepended to the first user message when
    /// the provider takes no system role.
    pending_instructions: Option<String>,
    exchanges: Vec<Exchange>,
    /// Transcript messages already attached to a logged exchange.
    logged: usize,
}

impl LlmAgent {
    pub fn new(spec: &AgentSpec, client: LlmClient, mut cfg: ProviderConfig, setup: &LlmSetup) -> Self {
        if let Some(t) = spec.params.temperature {
            cfg.temperature = Some(t);
        }
        let instructions = render_instructions(
            spec.params.framing.unwrap_or(setup.framing),
            spec.params.think_aloud.unwrap_or(setup.think_aloud),
            setup.objective,
            setup.trials,
            setup.n,
        );
        let (transcript, pending_instructions) = if cfg.instructions_as_system {
            (vec![ChatMessage::system(instructions)], None)
        } else {
            (Vec::new(), Some(instructions))
        };
        Self {
            client,
            cfg,
            objective: setup.objective,
            symbols: symbol_names(setup.n),
            parse_retries: spec.params.parse_retries.unwrap_or(DEFAULT_PARSE_RETRIES),
            transcript,
            pending_instructions,
            exchanges: Vec::new(),
            logged: 0,
        }
    }

    pub fn transcript(&self) -> &[ChatMessage] {
        &self.transcript
    }

    fn push_user(&mut self, text: String) {
        let content = match self.pending_instructions.take() {
            Some(instr) => format!("{instr}\n\n{text}"),
            None => text,
        };
        self.transcript.push(ChatMessage::user(content));
    }

    /// Sends `text` as the next user turn and records the exchange.
    fn ask(&mut self, phase: ExchangePhase, trial: usize, attempt: u32, text: String) -> Result<String, LlmError> {
        self.push_user(text);
        let appended = self.transcript[self.logged..].to_vec();
        self.logged = self.transcript.len();
        let mut exchange = Exchange {
            phase,
            trial,
            attempt,
            appended,
            response: None,
            usage: None,
            retries: 0,
            elapsed_ms: 0,
            parse_error: None,
            error: None,
        };
        match self.client.complete(&self.transcript, &self.cfg) {
            Ok(c) => {
                exchange.response = Some(c.message.content.clone());
                exchange.usage = c.usage;
                exchange.retries = c.retries;
                exchange.elapsed_ms = c.elapsed_ms;
                self.transcript.push(c.message.clone());
                self.logged = self.transcript.len();
                self.exchanges.push(exchange);
                Ok(c.message.content)
            }
            Err(e) => {
                exchange.error = Some(e.to_string());
                self.exchanges.push(exchange);
                Err(e)
            }
        }
    }

    /// Runs the comprehension quiz inside the game transcript. A failed quiz
    /// is retaken once when `retest` is set; the game proceeds either way.
    pub fn run_comprehension_test(&mut self, quiz: &Quiz, retest: bool) -> Result<QuizOutcome, AgentError> {
        let mut outcome = QuizOutcome { passed: false, attempts: 0, answers: Vec::new() };
        let max = if retest { 2 } else { 1 };
        while outcome.attempts < max && !outcome.passed {
            outcome.attempts += 1;
            let reply = self.ask(ExchangePhase::Quiz, 0, outcome.attempts, quiz.render(outcome.attempts > 1))?;
            let answers = quiz.read_answers(&reply);
            outcome.passed = quiz.grade(&answers);
            outcome.answers.push(answers);
        }
        Ok(outcome)
    }
}

impl Agent for LlmAgent {
    fn next_move(&mut self, obs: &Observable<'_>) -> Result<Action, AgentError> {
        let trial = obs.history.len() + 1;
        let prompt = match obs.history.last() {
            None => render_start(obs.start, obs.start_payoff, obs.trials_remaining, self.objective),
            Some(last) => {
                let fb = Feedback {
                    payoff: last.payoff,
                    wealth: last.wealth,
                    trial_index: last.trial,
                    best_payoff: obs.incumbent().1,
                };
                render_feedback(&fb, obs.trials_remaining, self.objective)
            }
        };
        let mut reply = self.ask(ExchangePhase::Trial, trial, 1, prompt)?;
        let mut attempt = 1;
        loop {
            match parse_configuration(&reply, &self.symbols) {
                Ok(config) => return Ok(Action { config, raw_text: reply }),
                Err(e) => {
                    self.exchanges.last_mut().expect("just asked").parse_error = Some(e.to_string());
                    if attempt > self.parse_retries {
                        return Err(AgentError::Parse { attempts: attempt, last: e });
                    }
                    attempt += 1;
                    let kind = e.to_string();
                    let problem = kind.split(" at bytes").next().unwrap_or(&kind).to_string();
                    reply = self.ask(ExchangePhase::Reprompt, trial, attempt, render_format_reminder(&problem))?;
                }
            }
        }
    }

    fn take_exchanges(&mut self) -> Vec<Exchange> {
        std::mem::take(&mut self.exchanges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;
    use crate::game::GameState;
    use crate::landscape::{Configuration, Landscape};
    use crate::llm_client::{ProviderKind, Role, ScriptedProvider, SimulatedParticipant};
    use std::sync::Arc;

    fn setup() -> LlmSetup {
        LlmSetup { framing: Framing::Alien, think_aloud: true, objective: Objective::Wealth, trials: 24, n: 10 }
    }

    fn cfg() -> ProviderConfig {
        ProviderConfig { kind: ProviderKind::Mock, ..Default::default() }
    }

    fn answer(c: &Configuration) -> String {
        format!("I think this is good.\nFinal answer:\n{}", super::super::templates::render_listing(c))
    }

    #[test]
    fn reprompts_until_the_answer_parses() {
        let good = Configuration::from_index(5, 10);
        let provider = Arc::new(ScriptedProvider::new([
            "I am not sure yet.".to_string(),
            "alpha: on, beta: off".to_string(),
            answer(&good),
        ]));
        let client = LlmClient::new(provider.clone(), Arc::new(crate::llm_client::Limiter::new(1)));
        let mut agent = LlmAgent::new(&AgentSpec::llm("m", 0), client, cfg(), &setup());
        let l = Landscape::generate(10, 5, 1).unwrap();
        let g = GameState::new(&l, 3, 24).unwrap();
        let a = agent.next_move(&Observable::of(&g, Objective::Wealth));
        let a = a.unwrap_or_else(|e| panic!("{e:?} {:#?}", agent.take_exchanges()));
        assert_eq!(a.config, good);
        let ex = agent.take_exchanges();
        assert_eq!(ex.len(), 3);
        assert_eq!(ex[0].phase, ExchangePhase::Trial);
        assert_eq!(ex[0].appended[0].role, Role::System);
        assert!(ex[0].parse_error.is_some() && ex[1].parse_error.is_some() && ex[2].parse_error.is_none());
        assert_eq!(ex[2].phase, ExchangePhase::Reprompt);
        assert!(ex[2].appended[0].content.contains("exactly once"));
        assert_eq!(ex[1].appended.len(), 1);
        assert_eq!(provider.requests()[2].messages.len(), 6);
    }

    #[test]
    fn gives_up_after_the_retry_budget() {
        let provider = ScriptedProvider::new(vec!["no idea"; 4]);
        let mut agent = LlmAgent::new(&AgentSpec::llm("m", 0), LlmClient::with_provider(provider), cfg(), &setup());
        let l = Landscape::generate(10, 5, 1).unwrap();
        let g = GameState::new(&l, 3, 24).unwrap();
        match agent.next_move(&Observable::of(&g, Objective::Wealth)) {
            Err(e @ AgentError::Parse { attempts: 4, .. }) => assert_eq!(e.abort_status(), crate::game::RunStatus::AbortedParse),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn provider_failure_aborts() {
        let mut agent = LlmAgent::new(&AgentSpec::llm("m", 0), LlmClient::with_provider(ScriptedProvider::default()), cfg(), &setup());
        let l = Landscape::generate(10, 5, 1).unwrap();
        let g = GameState::new(&l, 3, 24).unwrap();
        let e = agent.next_move(&Observable::of(&g, Objective::Wealth)).unwrap_err();
        assert_eq!(e.abort_status(), crate::game::RunStatus::AbortedProvider);
        assert!(agent.take_exchanges()[0].error.is_some());
    }

    #[test]
    fn quiz_retest_and_pass() {
        let quiz = Quiz::default();
        let key: Vec<char> = quiz.key();
        let right = key.iter().enumerate().map(|(i, k)| format!("{}: {k}", i + 1)).collect::<Vec<_>>().join("\n");
        let wrong = right.replacen(&format!("1: {}", key[0]), "1: D", 1);

        let run = |replies: Vec<String>, retest: bool| {
            let mut agent = LlmAgent::new(&AgentSpec::llm("m", 0), LlmClient::with_provider(ScriptedProvider::new(replies)), cfg(), &setup());
            let out = agent.run_comprehension_test(&quiz, retest).unwrap();
            (out, agent.transcript().len())
        };
        let (out, len) = run(vec![right.clone()], true);
        assert!(out.passed && out.attempts == 1 && len == 3);
        let (out, len) = run(vec![wrong.clone(), right.clone()], true);
        assert!(out.passed && out.attempts == 2 && len == 5);
        let (out, _) = run(vec![wrong.clone(), wrong.clone()], true);
        assert!(!out.passed && out.attempts == 2);
        let (out, _) = run(vec![wrong], false);
        assert!(!out.passed && out.attempts == 1);
    }

    #[test]
    fn instructions_can_ride_on_the_first_user_turn() {
        let provider = Arc::new(ScriptedProvider::new([answer(&Configuration::zeros(10))]));
        let client = LlmClient::new(provider.clone(), Arc::new(crate::llm_client::Limiter::new(1)));
        let c = ProviderConfig { instructions_as_system: false, ..cfg() };
        let mut agent = LlmAgent::new(&AgentSpec::llm("m", 0), client, c, &setup());
        let l = Landscape::generate(10, 5, 1).unwrap();
        let g = GameState::new(&l, 3, 24).unwrap();
        agent.next_move(&Observable::of(&g, Objective::Wealth)).unwrap();
        let sent = &provider.requests()[0].messages;
        assert_eq!(sent.len(), 1);
        assert_eq!(sent[0].role, Role::User);
        assert!(sent[0].content.starts_with("Imagine"));
        assert!(sent[0].content.contains("The game begins."));
    }

    #[test]
    fn simulated_participant_plays_a_full_game() {
        let sim = SimulatedParticipant::new(11, 10, Quiz::default().key());
        let spec = AgentSpec::llm("sim", 0);
        assert_eq!(spec.kind, AgentKind::Llm);
        let mut agent = LlmAgent::new(&spec, LlmClient::with_provider(sim), cfg(), &setup());
        assert!(agent.run_comprehension_test(&Quiz::default(), true).unwrap().passed);
        let l = Landscape::generate(10, 5, 1).unwrap();
        let mut g = GameState::new(&l, 3, 24).unwrap();
        while !g.is_closed() {
            let a = agent.next_move(&Observable::of(&g, Objective::Wealth)).unwrap();
            assert!(!a.raw_text.is_empty());
            g.submit(a.config, a.raw_text).unwrap();
        }
        // the participant exploits its best picture at some point
        assert!(g.history().iter().any(|t| t.distance == 0));
    }
}
