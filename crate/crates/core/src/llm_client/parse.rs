//! Extraction of a configuration from free-form model output.
//!
//! Every `symbol <sep> state` pair in the text is located, pairs are grouped
//! into contiguous blocks, and the last block holding at least half of the
//! symbols is taken as the answer. Inside that block each symbol must be
//! assigned exactly once (repeats with the same state are tolerated).

use std::collections::BTreeMap;
use std::fmt;

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use regex::Regex;

use crate::landscape::Configuration;
use crate::text;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    NoAnswer,
    Missing(Vec<String>),
    Contradictory(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte span of the offending region of the input.
    pub span: (usize, usize),
    pub excerpt: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::NoAnswer => write!(f, "no recognizable answer list"),
            ParseErrorKind::Missing(s) => write!(f, "answer does not set {}", s.join(", ")),
            ParseErrorKind::Contradictory(s) => write!(f, "answer sets {s} both on and off"),
        }?;
        write!(f, " at bytes {}..{}", self.span.0, self.span.1)
    }
}

impl std::error::Error for ParseError {}

struct Pair {
    start: usize,
    end: usize,
    symbol: usize,
    on: bool,
}

/// Compiled pair patterns, one per symbol list. Shared through `Arc`: a
/// cloned `Regex` would start with an empty matching cache.
fn pair_regex(symbols: &[String]) -> Arc<Regex> {
    static CACHE: LazyLock<Mutex<HashMap<Vec<String>, Arc<Regex>>>> = LazyLock::new(Default::default);
    let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    cache.entry(symbols.to_vec()).or_insert_with(|| Arc::new(compile_pair_regex(symbols))).clone()
}

fn compile_pair_regex(symbols: &[String]) -> Regex {
    let names = symbols.iter().map(|s| regex::escape(s)).collect::<Vec<_>>().join("|");
    // symbol, optional short parenthetical such as "(α)", a separator, state
    let pattern = format!(
        r#"(?i)\b({names})\b[\s*_"'`]*(?:\([^()\n]{{0,12}}\))?[\s*_"'`]*(?:[:=]|->|=>|→|-|–|\bis\b|\bset to\b)?[\s*_"'`]*\b(on|off|activated|deactivated|1|0|high|low)\b"#
    );
    Regex::new(&pattern).expect("pair pattern compiles")
}

fn is_on(state: &str) -> bool {
    matches!(state.to_ascii_lowercase().as_str(), "on" | "activated" | "1" | "high")
}

/// Gaps between answer pairs may hold punctuation, bullets, numbering and
/// at most a few words, but no blank line.
fn contiguous(gap: &str) -> bool {
    !gap.contains("\n\n") && !gap.contains("\r\n\r\n") && text::words(gap).iter().filter(|(_, _, w)| w.chars().any(char::is_alphabetic)).count() <= 3
}

/// Pairs of the answer block and its byte span.
fn answer_block(input: &str, symbols: &[String]) -> Result<(Vec<Pair>, (usize, usize)), ParseError> {
    let re = pair_regex(symbols);
    let pairs: Vec<Pair> = re
        .captures_iter(input)
        .map(|c| {
            let whole = c.get(0).unwrap();
            let name = c[1].to_lowercase();
            Pair {
                start: whole.start(),
                end: whole.end(),
                symbol: symbols.iter().position(|s| s.to_lowercase() == name).expect("matched a known symbol"),
                on: is_on(&c[2]),
            }
        })
        .collect();

    let mut blocks: Vec<Vec<Pair>> = Vec::new();
    for p in pairs {
        match blocks.last_mut() {
            Some(b) if contiguous(&input[b.last().unwrap().end..p.start]) => b.push(p),
            _ => blocks.push(vec![p]),
        }
    }
    let n = symbols.len();
    let answer = blocks.into_iter().rev().find(|b| 2 * b.len() >= n).ok_or_else(|| ParseError {
        kind: ParseErrorKind::NoAnswer,
        span: (0, input.len()),
        excerpt: excerpt(input, 0, input.len()),
    })?;
    let span = (answer[0].start, answer.last().unwrap().end);
    Ok((answer, span))
}

/// Byte span of the block that would be read as the answer, if any.
pub fn answer_span(input: &str, symbols: &[String]) -> Option<(usize, usize)> {
    answer_block(input, symbols).ok().map(|(_, span)| span)
}

pub fn parse_configuration(input: &str, symbols: &[String]) -> Result<Configuration, ParseError> {
    let n = symbols.len();
    let (answer, span) = answer_block(input, symbols)?;

    let mut states: BTreeMap<usize, bool> = BTreeMap::new();
    for p in &answer {
        if let Some(&prev) = states.get(&p.symbol) {
            if prev != p.on {
                return Err(ParseError {
                    kind: ParseErrorKind::Contradictory(symbols[p.symbol].clone()),
                    span,
                    excerpt: excerpt(input, span.0, span.1),
                });
            }
        }
        states.insert(p.symbol, p.on);
    }
    let missing: Vec<String> = (0..n).filter(|i| !states.contains_key(i)).map(|i| symbols[i].clone()).collect();
    if !missing.is_empty() {
        return Err(ParseError { kind: ParseErrorKind::Missing(missing), span, excerpt: excerpt(input, span.0, span.1) });
    }
    Ok(Configuration::new((0..n).map(|i| states[&i]).collect()))
}

fn excerpt(input: &str, start: usize, end: usize) -> String {
    let s: String = input[start..end].chars().take(160).collect();
    s
}
