//! Sentence labeling through a chat model, used by the annotator.

use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};

use super::mock::RUBRIC_MARKER;
use super::{ChatMessage, LlmClient, LlmError, ProviderConfig};
use crate::annotate::{LabeledSegment, SegmentLabel};
use crate::text;

pub const DEFAULT_RUBRIC: &str = include_str!("../../fixtures/rubric.txt");

/// A labeling instruction shipped as a fixture.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rubric {
    pub text: String,
}

impl Default for Rubric {
    fn default() -> Self {
        Self { text: DEFAULT_RUBRIC.to_string() }
    }
}

impl Rubric {
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }
}

/// Parses `<number>: <label>` lines, requiring exactly one label for each of
/// `count` sentences.
pub fn parse_labels(reply: &str, count: usize) -> Result<Vec<SegmentLabel>, LlmError> {
    static RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^\s*(\d+)\s*[:.)\-]\s*\**\s*(forward|backward|other)\b").unwrap());
        let line = &*RE;
    let mut labels: Vec<Option<SegmentLabel>> = vec![None; count];
    for l in reply.lines().filter(|l| !l.trim().is_empty()) {
        let c = line
            .captures(l)
            .ok_or_else(|| LlmError::ClassifierFormat(format!("unrecognized line {l:?}")))?;
        let idx: usize = c[1].parse().map_err(|_| LlmError::ClassifierFormat(format!("bad index in {l:?}")))?;
        if idx == 0 || idx > count {
            return Err(LlmError::ClassifierFormat(format!("sentence number {idx} outside 1..={count}")));
        }
        let label = match c[2].to_ascii_lowercase().as_str() {
            "forward" => SegmentLabel::Forward,
            "backward" => SegmentLabel::Backward,
            _ => SegmentLabel::Other,
        };
        if labels[idx - 1].replace(label).is_some() {
            return Err(LlmError::ClassifierFormat(format!("sentence {idx} labeled twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| LlmError::ClassifierFormat(format!("sentence {} has no label", i + 1))))
        .collect()
}

/// Labels every sentence of `input` as forward, backward or other. Empty
/// input returns no segments without contacting the provider.
pub fn classify_label(
    client: &LlmClient,
    cfg: &ProviderConfig,
    input: &str,
    rubric: &Rubric,
) -> Result<Vec<LabeledSegment>, LlmError> {
    let sentences = text::sentences(input);
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    let numbered = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.text.replace('\n', " ")))
        .collect::<Vec<_>>()
        .join("\n");
    let system = format!("{RUBRIC_MARKER}\n{}", rubric.text);
    let transcript = [ChatMessage::system(system), ChatMessage::user(numbered)];
    let reply = client.complete(&transcript, cfg)?;
    let labels = parse_labels(&reply.message.content, sentences.len())?;
    Ok(sentences
        .iter()
        .zip(labels)
        .map(|(s, label)| LabeledSegment { start: s.start, end: s.end, label })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::{ProviderKind, ScriptedProvider};

    fn cfg() -> ProviderConfig {
        ProviderConfig { kind: ProviderKind::Mock, ..Default::default() }
    }

    #[test]
    fn well_formed_labels() {
        let provider = std::sync::Arc::new(ScriptedProvider::new(["1: backward\n2: forward"]));
        let client = LlmClient::new(provider.clone(), std::sync::Arc::new(crate::llm_client::Limiter::new(1)));
        let text = "Last round taught me alpha matters. Next I will flip beta.";
        let segs = classify_label(&client, &cfg(), text, &Rubric::default()).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].label, SegmentLabel::Backward);
        assert_eq!(&text[segs[1].start..segs[1].end], "Next I will flip beta.");
        let sent = &provider.requests()[0].messages;
        assert!(sent[0].content.starts_with(RUBRIC_MARKER));
        assert!(sent[1].content.starts_with("1. Last round"));
    }

    #[test]
    fn garbage_is_a_format_error() {
        let client = LlmClient::with_provider(ScriptedProvider::new(["sure, happy to help!"]));
        let r = classify_label(&client, &cfg(), "One. Two.", &Rubric::default());
        assert!(matches!(r, Err(LlmError::ClassifierFormat(_))));
    }

    #[test]
    fn empty_input_skips_the_provider() {
        let client = LlmClient::with_provider(ScriptedProvider::new(Vec::<String>::new()));
        assert!(classify_label(&client, &cfg(), "   ", &Rubric::default()).unwrap().is_empty());
    }

    #[test]
    fn label_parser_requires_full_coverage() {
        assert!(parse_labels("1: forward", 2).is_err());
        assert!(parse_labels("1: forward\n1: other", 1).is_err());
        assert!(parse_labels("3: forward", 2).is_err());
        assert_eq!(parse_labels("2) Other\n1 - **Backward**", 2).unwrap(), vec![SegmentLabel::Backward, SegmentLabel::Other]);
    }
}
