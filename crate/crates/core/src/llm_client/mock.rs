//! Deterministic providers for tests and offline experiments.

use std::collections::VecDeque;
use std::sync::{LazyLock, Mutex};
use std::time::Duration;

use rand::Rng as _;
use regex::Regex;
use sha2::{Digest, Sha256};

use super::{parse_configuration, ChatProvider, ChatRequest, LlmError, ProviderReply, Role, TransportError, Usage};
use crate::landscape::{symbol_names, Configuration};
use crate::rng;

/// Marker present in every comprehension-quiz prompt.
pub const QUIZ_MARKER: &str = "COMPREHENSION CHECK";
/// Marker present in every label-classification system prompt.
pub(crate) const RUBRIC_MARKER: &str = "SENTENCE LABELING";

/// Returns canned replies (or failures) in order and records every request.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<Result<String, TransportError>>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedProvider {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_results(replies.into_iter().map(|s| Ok(s.into())).collect())
    }

    pub fn from_results(replies: Vec<Result<String, TransportError>>) -> Self {
        Self { queue: Mutex::new(replies.into()), requests: Mutex::default() }
    }

    /// Reads one JSON string per line.
    pub fn from_file(path: &std::path::Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("cannot read script {}: {e}", path.display())))?;
        let replies = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<String>(l)
                    .map_err(|e| LlmError::Config(format!("script {} line {}: {e}", path.display(), i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(replies))
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl ChatProvider for ScriptedProvider {
    fn send(&self, request: &ChatRequest, _timeout: Duration) -> Result<ProviderReply, TransportError> {
        self.requests.lock().unwrap().push(request.clone());
        match self.queue.lock().unwrap().pop_front() {
            Some(Ok(content)) => Ok(ProviderReply { content, usage: None }),
            Some(Err(e)) => Err(e),
            None => Err(TransportError::Fatal { status: None, message: "script exhausted".into() }),
        }
    }
}

/// A deterministic stand-in participant.
///
/// It reads the transcript the way a model would: the start configuration
/// and every payoff come from the feedback text, its own earlier moves from
/// its earlier answers. It answers comprehension quizzes from a key, labels
/// sentences for the classifier rubric, and otherwise plays a noisy local
/// search with satisficing, writing a short think-aloud before a final
/// answer list. Identical transcripts always produce identical replies.
#[derive(Debug, Clone)]
pub struct SimulatedParticipant {
    seed: u64,
    n: usize,
    quiz_answers: Vec<char>,
    /// Probability of emitting an answer with a symbol missing.
    pub format_slip: f64,
}

struct Persona {
    patience: usize,
    long_jump: f64,
    satisfice: f64,
}

impl SimulatedParticipant {
    pub fn new(seed: u64, n: usize, quiz_answers: Vec<char>) -> Self {
        Self { seed, n, quiz_answers, format_slip: 0.03 }
    }

    fn persona(&self, salt: u64) -> Persona {
        let mut r = rng::seeded(rng::derive(self.seed, &[salt, 0x7e75]));
        Persona {
            patience: r.gen_range(2..=6),
            long_jump: r.gen_range(0.05..0.35),
            satisfice: r.gen_range(80.0..97.0),
        }
    }

    fn digest(messages: &[super::ChatMessage]) -> u64 {
        let mut h = Sha256::new();
        for m in messages {
            h.update([m.role as u8]);
            h.update(m.content.as_bytes());
            h.update([0]);
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
    }

    fn answer_quiz(&self, prompt: &str) -> String {
        static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*(\d+)[.)]").unwrap());
        let count = NUMBERED.captures_iter(prompt).count().max(self.quiz_answers.len());
        (0..count)
            .map(|i| format!("{}: {}", i + 1, self.quiz_answers.get(i).copied().unwrap_or('A')))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn label_sentences(prompt: &str) -> String {
        static LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*(\d+)[.:]\s*(.*)$").unwrap());
        let line = &*LINE;
        line.captures_iter(prompt)
            .map(|c| {
                let s = c[2].to_lowercase();
                let label = if ["last", "previous", "so far", "learned", "was"].iter().any(|k| s.contains(k)) {
                    "backward"
                } else if ["next", "will", "plan", "try"].iter().any(|k| s.contains(k)) {
                    "forward"
                } else {
                    "other"
                };
                format!("{}: {label}", &c[1])
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn play(&self, request: &ChatRequest) -> String {
        let symbols = symbol_names(self.n);
        static PAYOFF: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"(?i)payoff of (-?[0-9]+(?:\.[0-9]+)?) points").unwrap());
        let payoff_re = &*PAYOFF;
        static REMAINING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)(\d+) trials? remaining").unwrap());
        let remaining_re = &*REMAINING;
        let mut start: Option<(Configuration, f64)> = None;
        let mut pending: Option<Configuration> = None;
        let mut tried: Vec<(Configuration, f64)> = Vec::new();
        let mut remaining = None;
        for m in &request.messages {
            match m.role {
                Role::System => {}
                Role::Assistant => {
                    if let Ok(c) = parse_configuration(&m.content, &symbols) {
                        pending = Some(c);
                    }
                }
                Role::User => {
                    if m.content.contains(QUIZ_MARKER) {
                        continue;
                    }
                    if let Some(r) = remaining_re.captures(&m.content) {
                        remaining = r[1].parse::<usize>().ok();
                    }
                    let payoff = payoff_re.captures(&m.content).and_then(|c| c[1].parse::<f64>().ok());
                    match (start.is_none(), payoff) {
                        (true, Some(p)) => {
                            if let Ok(c) = parse_configuration(&m.content, &symbols) {
                                start = Some((c, p));
                            }
                        }
                        (false, Some(p)) => {
                            if let Some(c) = pending.take() {
                                tried.push((c, p));
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        let (start_cfg, start_payoff) = start.unwrap_or_else(|| (Configuration::zeros(self.n), 0.0));
        // runs differ by start, so the persona does too
        let persona = self.persona(start_salt(&start_cfg, start_payoff));
        let mut best = (start_cfg, start_payoff, 0usize);
        for (i, (c, p)) in tried.iter().enumerate() {
            if *p > best.1 {
                best = (c.clone(), *p, i + 1);
            }
        }
        let mut r = rng::seeded(rng::derive(self.seed, &[Self::digest(&request.messages)]));
        let since_best = tried.len() - best.2;
        let exploit = best.1 >= persona.satisfice
            || since_best >= persona.patience
            || remaining.is_some_and(|left| left <= 2);

        let mut thought = String::new();
        if let Some((_, last)) = tried.last() {
            let cmp = if *last >= best.1 { "matches my best so far" } else { "is below my best so far" };
            thought.push_str(&format!(
                "In the last round the payoff was {last:.2}, which {cmp} of {:.2}. ",
                best.1
            ));
        } else {
            thought.push_str(&format!("The starting picture earned {start_payoff:.2}. "));
        }
        // recollection and hesitation vary how many symbols get named
        if let Some((last, _)) = tried.last() {
            let changed: Vec<&str> =
                (0..self.n).filter(|&i| last.get(i) != best.0.get(i)).map(|i| symbols[i].as_str()).take(3).collect();
            if !changed.is_empty() && r.gen_bool(0.5) {
                thought.push_str(&format!("The previous change to {} was not an improvement. ", changed.join(", ")));
            }
        }
        let next = if exploit {
            if r.gen_bool(0.4) {
                let i = r.gen_range(0..self.n);
                thought.push_str(&format!("I was tempted to switch {}, but ", symbols[i]));
            }
            thought.push_str("I will keep selling my best picture to build wealth.\n\n");
            best.0.clone()
        } else if r.gen_bool(persona.long_jump) {
            let flips = r.gen_range(2..=4.min(self.n).max(2));
            let mut c = best.0.clone();
            let mut changed = Vec::new();
            while changed.len() < flips.min(self.n) {
                let i = r.gen_range(0..self.n);
                if !changed.contains(&i) {
                    changed.push(i);
                    c = c.flipped(i);
                }
            }
            let names: Vec<&str> = changed.iter().map(|&i| symbols[i].as_str()).collect();
            thought.push_str(&format!("Next I will try a bolder change and switch {}.\n\n", names.join(", ")));
            c
        } else {
            let i = r.gen_range(0..self.n);
            if r.gen_bool(0.3) {
                thought.push_str("Next I will try one small change to see whether it helps.\n\n");
            } else {
                thought.push_str(&format!("Next I will try switching {} to see whether it helps.\n\n", symbols[i]));
            }
            best.0.flipped(i)
        };
        let reminded = request
            .messages
            .last()
            .is_some_and(|m| m.content.to_lowercase().contains("exactly once"));
        let slip = !reminded && r.gen_bool(self.format_slip);
        let listed = if slip { self.n - 1 } else { self.n };
        let list: Vec<String> = (0..listed)
            .map(|i| format!("{}: {}", symbols[i], if next.get(i) { "on" } else { "off" }))
            .collect();
        format!("{thought}Final answer:\n{}", list.join("\n"))
    }
}

fn start_salt(start: &Configuration, payoff: f64) -> u64 {
    (start.index() as u64) ^ payoff.to_bits()
}

impl ChatProvider for SimulatedParticipant {
    fn send(&self, request: &ChatRequest, _timeout: Duration) -> Result<ProviderReply, TransportError> {
        let last = request.messages.last().map(|m| m.content.as_str()).unwrap_or("");
        let is_rubric = request.messages.iter().any(|m| m.role == Role::System && m.content.contains(RUBRIC_MARKER));
        let content = if is_rubric {
            Self::label_sentences(last)
        } else if last.contains(QUIZ_MARKER) {
            self.answer_quiz(last)
        } else {
            self.play(request)
        };
        let prompt_tokens = request.messages.iter().map(|m| m.content.len() as u64 / 4).sum();
        let completion_tokens = content.len() as u64 / 4;
        Ok(ProviderReply { content, usage: Some(Usage { prompt_tokens, completion_tokens }) })
    }
}
