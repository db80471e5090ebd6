//! Instruction, feedback and quiz texts shown to LLM agents.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::game::{Feedback, Objective};
use crate::landscape::{symbol_names, Configuration};
use crate::llm_client::QUIZ_MARKER;

use super::AgentError;

const ALIEN: &str = include_str!("../../fixtures/templates/alien.txt");
const NUTRITION: &str = include_str!("../../fixtures/templates/nutrition.txt");
const BAREBONE: &str = include_str!("../../fixtures/templates/barebone.txt");
const OBJECTIVES: &str = include_str!("../../fixtures/templates/objectives.toml");
const QUIZ: &str = include_str!("../../fixtures/quiz.toml");

/// The per-trial request, sent verbatim.
pub const TRIAL_PROMPT: &str = "Considering what you know so far, please submit your next trial configuration.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Framing {
    #[default]
    Alien,
    Nutrition,
    Barebone,
}

impl FromStr for Framing {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "alien" => Ok(Framing::Alien),
            "nutrition" => Ok(Framing::Nutrition),
            "barebone" => Ok(Framing::Barebone),
            other => Err(AgentError::Parameter(format!("unknown framing {other:?}"))),
        }
    }
}

impl fmt::Display for Framing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Framing::Alien => "alien",
            Framing::Nutrition => "nutrition",
            Framing::Barebone => "barebone",
        })
    }
}

#[derive(Deserialize)]
struct ObjectiveText {
    feedback_clause: String,
    statement: String,
}

#[derive(Deserialize)]
struct ThinkAloud {
    clause: String,
}

#[derive(Deserialize)]
struct Objectives {
    wealth: ObjectiveText,
    peak: ObjectiveText,
    think_aloud: ThinkAloud,
}

fn objectives() -> Objectives {
    toml::from_str(OBJECTIVES).expect("bundled objectives parse")
}

/// Hash over every bundled template fixture.
pub fn template_hash() -> String {
    let mut h = Sha256::new();
    for part in [ALIEN, NUTRITION, BAREBONE, OBJECTIVES, TRIAL_PROMPT] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

/// Renders the instruction block for a game with `n` symbols and `trials`
/// trials.
pub fn render_instructions(framing: Framing, think_aloud: bool, objective: Objective, trials: usize, n: usize) -> String {
    let texts = objectives();
    let obj = match objective {
        Objective::Wealth => &texts.wealth,
        Objective::Peak => &texts.peak,
    };
    let template = match framing {
        Framing::Alien => ALIEN,
        Framing::Nutrition => NUTRITION,
        Framing::Barebone => BAREBONE,
    };
    template
        .replace("{symbol_list}", &symbol_names(n).join(", "))
        .replace("{feedback_clause}", &obj.feedback_clause)
        .replace("{objective}", &obj.statement)
        .replace("{think_aloud}", if think_aloud { &texts.think_aloud.clause } else { "" })
        .replace("{trials}", &trials.to_string())
        .replace("{n}", &n.to_string())
        .trim_end()
        .to_string()
}

pub fn render_listing(c: &Configuration) -> String {
    symbol_names(c.len())
        .iter()
        .zip(c.bits())
        .map(|(s, &b)| format!("{s}: {}", if b { "on" } else { "off" }))
        .collect::<Vec<_>>()
        .join("\n")
}

fn standing(objective: Objective, wealth: f64, best: f64) -> String {
    match objective {
        Objective::Wealth => format!("Your current wealth is {wealth:.2} points."),
        Objective::Peak => format!("Your best payoff so far is {best:.2} points."),
    }
}

pub fn render_start(start: &Configuration, payoff: f64, trials: usize, objective: Objective) -> String {
    format!(
        "The game begins. Your starting configuration is:\n{}\nIt has a payoff of {payoff:.2} points. {} {trials} trials remaining.\n\n{TRIAL_PROMPT}",
        render_listing(start),
        standing(objective, 0.0, payoff),
    )
}

pub fn render_feedback(fb: &Feedback, remaining: usize, objective: Objective) -> String {
    format!(
        "Trial {}: the configuration you submitted earned a payoff of {:.2} points. {} {remaining} trials remaining.\n\n{TRIAL_PROMPT}",
        fb.trial_index,
        fb.payoff,
        standing(objective, fb.wealth, fb.best_payoff),
    )
}

pub fn render_format_reminder(problem: &str) -> String {
    format!(
        "Your reply could not be read ({problem}). Please restate the configuration you want to submit, listing every symbol exactly once on its own line in the form \"symbol: on\" or \"symbol: off\"."
    )
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct QuizQuestion {
    pub prompt: String,
    pub options: Vec<String>,
    pub answer: String,
}

/// The comprehension quiz fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct Quiz {
    pub version: String,
    pub questions: Vec<QuizQuestion>,
    source: String,
}

#[derive(Deserialize)]
struct QuizFile {
    version: String,
    question: Vec<QuizQuestion>,
}

impl Default for Quiz {
    fn default() -> Self {
        Self::parse(QUIZ).expect("bundled quiz parses")
    }
}

impl Quiz {
    pub fn parse(source: &str) -> Result<Self, toml::de::Error> {
        let f: QuizFile = toml::from_str(source)?;
        Ok(Self { version: f.version, questions: f.question, source: source.to_string() })
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.source.as_bytes()))
    }

    pub fn key(&self) -> Vec<char> {
        self.questions.iter().map(|q| q.answer.chars().next().unwrap_or('?')).collect()
    }

    pub fn render(&self, retest: bool) -> String {
        let mut out = format!("{QUIZ_MARKER}\n");
        if retest {
            out.push_str("Some of your answers were not correct. Please re-read the instructions and answer all questions again.\n");
        } else {
            out.push_str("Before the game starts, please answer the following multiple-choice questions about the instructions.\n");
        }
        out.push_str("Reply with one line per question in the form \"<number>: <letter>\".\n");
        for (i, q) in self.questions.iter().enumerate() {
            out.push_str(&format!("\n{}. {}\n", i + 1, q.prompt));
            for (j, o) in q.options.iter().enumerate() {
                out.push_str(&format!("   {}) {o}\n", (b'A' + j as u8) as char));
            }
        }
        out.trim_end().to_string()
    }

    /// Extracts one letter per question; unanswered questions are `None`.
    pub fn read_answers(&self, reply: &str) -> Vec<Option<char>> {
        static RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\W*(\d+)\s*[:.)\-]\s*\**\(?([A-Za-z])\b").unwrap());
        let re = &*RE;
        let mut answers = vec![None; self.questions.len()];
        for c in re.captures_iter(reply) {
            if let Ok(i) = c[1].parse::<usize>() {
                if (1..=answers.len()).contains(&i) && answers[i - 1].is_none() {
                    answers[i - 1] = c[2].chars().next().map(|ch| ch.to_ascii_uppercase());
                }
            }
        }
        answers
    }

    pub fn grade(&self, answers: &[Option<char>]) -> bool {
        answers.len() == self.questions.len() && answers.iter().zip(self.key()).all(|(a, k)| *a == Some(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::GREEK;
    use crate::text::tokenize;

    #[test]
    fn alien_lists_every_symbol_once() {
        let text = render_instructions(Framing::Alien, false, Objective::Wealth, 24, 10);
        let tokens = tokenize(&text);
        for name in &GREEK[..10] {
            assert_eq!(tokens.iter().filter(|t| t == name).count(), 1, "{name}");
        }
        assert!(!text.contains('{'), "unfilled placeholder in {text}");
    }

    #[test]
    fn think_aloud_only_adds_its_clause() {
        for framing in [Framing::Alien, Framing::Nutrition, Framing::Barebone] {
            let plain = render_instructions(framing, false, Objective::Wealth, 24, 10);
            let loud = render_instructions(framing, true, Objective::Wealth, 24, 10);
            let clause = objectives().think_aloud.clause;
            assert!(loud.contains("think aloud"));
            assert!(!plain.contains("think aloud"));
            assert_eq!(loud.replacen(&clause, "", 1), plain);
        }
    }

    #[test]
    fn peak_objective_never_mentions_wealth() {
        for framing in [Framing::Alien, Framing::Nutrition, Framing::Barebone] {
            let text = render_instructions(framing, true, Objective::Peak, 24, 10).to_lowercase();
            assert!(!text.contains("wealth"), "{framing}");
            assert!(!text.contains("accumulated"));
        }
        assert!(render_instructions(Framing::Alien, false, Objective::Wealth, 24, 10).contains("accumulated wealth"));
    }

    #[test]
    fn unknown_framing_is_rejected() {
        assert!("alien".parse::<Framing>().is_ok());
        assert!(matches!("casino".parse::<Framing>(), Err(AgentError::Parameter(_))));
    }

    #[test]
    fn feedback_carries_exact_prompt() {
        let fb = Feedback { payoff: 61.234, wealth: 120.5, trial_index: 2, best_payoff: 61.234 };
        let text = render_feedback(&fb, 22, Objective::Wealth);
        assert!(text.contains("payoff of 61.23 points"));
        assert!(text.contains("wealth is 120.50 points"));
        assert!(text.ends_with(TRIAL_PROMPT));
        assert!(!render_feedback(&fb, 22, Objective::Peak).contains("wealth"));
    }

    #[test]
    fn quiz_grading() {
        let quiz = Quiz::default();
        let key: String = quiz.key().iter().enumerate().map(|(i, k)| format!("{}: {k}\n", i + 1)).collect();
        assert!(quiz.grade(&quiz.read_answers(&key)));
        let wrong = key.replacen("1: B", "1: A", 1);
        assert!(!quiz.grade(&quiz.read_answers(&wrong)));
        assert!(!quiz.grade(&quiz.read_answers("I agree to everything")));
        assert!(quiz.render(false).starts_with(QUIZ_MARKER));
        assert_eq!(quiz.hash(), Quiz::default().hash());
    }
}
