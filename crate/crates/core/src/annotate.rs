//! Attention measures over per-trial thought text: forward/backward
//! character counts and attention breadth.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::llm_client::{classify_label, LlmClient, ProviderConfig, Rubric};
use crate::text;

pub const DEFAULT_LEXICON: &str = include_str!("../fixtures/lexicon.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentLabel {
    Forward,
    Backward,
    Other,
}

/// A labeled sentence; `start..end` is a byte span into the source text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSegment {
    pub start: usize,
    pub end: usize,
    pub label: SegmentLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Llm,
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThoughtAnnotation {
    pub run_id: String,
    pub trial: usize,
    pub forward_chars: usize,
    pub backward_chars: usize,
    pub breadth: usize,
    pub classifier: ClassifierKind,
    pub segments: Vec<LabeledSegment>,
    /// Set when the LLM classifier failed and the heuristic was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
    /// True when the trial carried no thought text at all.
    #[serde(default)]
    pub empty_text: bool,
}

/// Keyword lists for the heuristic classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub version: String,
    backward: Vec<Vec<String>>,
    forward: Vec<Vec<String>>,
    hash: String,
}

#[derive(Deserialize)]
struct LexiconFile {
    version: String,
    backward: Vec<String>,
    forward: Vec<String>,
}

impl Lexicon {
    pub fn parse(source: &str) -> Result<Self, toml::de::Error> {
        let file: LexiconFile = toml::from_str(source)?;
        let phrases = |v: Vec<String>| v.iter().map(|p| text::tokenize(p)).filter(|p| !p.is_empty()).collect();
        Ok(Self {
            version: file.version,
            backward: phrases(file.backward),
            forward: phrases(file.forward),
            hash: hex::encode(Sha256::digest(source.as_bytes())),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Labels one sentence: backward if it has at least as many backward
    /// cues as forward cues (and at least one), forward if it has more
    /// forward cues, other otherwise.
    pub fn label(&self, sentence: &str) -> SegmentLabel {
        let tokens = text::tokenize(sentence);
        let hits = |list: &[Vec<String>]| list.iter().filter(|p| text::contains_phrase(&tokens, p)).count();
        let (b, f) = (hits(&self.backward), hits(&self.forward));
        if b > 0 && b >= f {
            SegmentLabel::Backward
        } else if f > b {
            SegmentLabel::Forward
        } else {
            SegmentLabel::Other
        }
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }
}

pub fn classify_heuristic(input: &str, lexicon: &Lexicon) -> Vec<LabeledSegment> {
    text::sentences(input)
        .into_iter()
        .map(|s| LabeledSegment { start: s.start, end: s.end, label: lexicon.label(s.text) })
        .collect()
}

pub enum ClassifyMode<'a> {
    Heuristic,
    /// LLM labeling with automatic heuristic fallback on format errors.
    Llm { client: &'a LlmClient, cfg: &'a ProviderConfig, rubric: &'a Rubric },
}

/// Labels every sentence. Returns the classifier that produced the labels
/// and, on fallback, the reason.
pub fn classify(
    input: &str,
    mode: &ClassifyMode<'_>,
    lexicon: &Lexicon,
) -> (Vec<LabeledSegment>, ClassifierKind, Option<String>) {
    match mode {
        ClassifyMode::Heuristic => (classify_heuristic(input, lexicon), ClassifierKind::Heuristic, None),
        ClassifyMode::Llm { client, cfg, rubric } => match classify_label(client, cfg, input, rubric) {
            Ok(segments) => (segments, ClassifierKind::Llm, None),
            Err(e) => (classify_heuristic(input, lexicon), ClassifierKind::Heuristic, Some(e.to_string())),
        },
    }
}

/// Number of distinct symbol names appearing as whole words.
pub fn attention_breadth(input: &str, symbols: &[String]) -> usize {
    let tokens = text::tokenize(input);
    symbols.iter().filter(|s| tokens.contains(&s.to_lowercase())).count()
}

/// Breadth of the reasoning only: the answer list, which names every symbol
/// by construction, is blanked out first.
pub fn reasoning_breadth(input: &str, symbols: &[String]) -> usize {
    match crate::llm_client::answer_span(input, symbols) {
        Some((a, b)) => attention_breadth(&format!("{} {}", &input[..a], &input[b..]), symbols),
        None => attention_breadth(input, symbols),
    }
}

/// Forward characters over backward characters, with the denominator
/// floored at one.
pub fn forward_ratio(a: &ThoughtAnnotation) -> f64 {
    a.forward_chars as f64 / a.backward_chars.max(1) as f64
}

pub fn annotate(
    run_id: &str,
    trial: usize,
    input: &str,
    symbols: &[String],
    mode: &ClassifyMode<'_>,
    lexicon: &Lexicon,
) -> ThoughtAnnotation {
    let (segments, classifier, fallback_reason) = classify(input, mode, lexicon);
    let chars = |label| {
        segments.iter().filter(|s| s.label == label).map(|s| input[s.start..s.end].chars().count()).sum()
    };
    ThoughtAnnotation {
        run_id: run_id.to_string(),
        trial,
        forward_chars: chars(SegmentLabel::Forward),
        backward_chars: chars(SegmentLabel::Backward),
        breadth: reasoning_breadth(input, symbols),
        classifier,
        fallback_reason,
        empty_text: input.trim().is_empty(),
        segments,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::symbol_names;
    use crate::llm_client::{ProviderKind, ScriptedProvider};
    use proptest::prelude::*;

    fn ann(forward_chars: usize, backward_chars: usize) -> ThoughtAnnotation {
        ThoughtAnnotation {
            run_id: "r".into(),
            trial: 1,
            forward_chars,
            backward_chars,
            breadth: 0,
            classifier: ClassifierKind::Heuristic,
            segments: vec![],
            fallback_reason: None,
            empty_text: false,
        }
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(forward_ratio(&ann(120, 60)), 2.0);
        assert_eq!(forward_ratio(&ann(100, 0)), 100.0);
        assert_eq!(forward_ratio(&ann(0, 50)), 0.0);
    }

    #[test]
    fn breadth_examples() {
        let s = symbol_names(10);
        assert_eq!(attention_breadth("flip alpha, keep beta", &s), 2);
        assert_eq!(attention_breadth("alpha alpha alpha", &s), 1);
        assert_eq!(attention_breadth("the alphabet is large", &s), 0);
        assert_eq!(attention_breadth("ALPHA and Kappa", &s), 2);
    }

    #[test]
    fn answer_list_does_not_count_toward_breadth() {
        let s = symbol_names(10);
        let listing: Vec<String> = s.iter().map(|x| format!("{x}: off")).collect();
        let text = format!("I will switch gamma on next.\n\n{}", listing.join("\n"));
        assert_eq!(attention_breadth(&text, &s), 10);
        assert_eq!(reasoning_breadth(&text, &s), 1);
        assert_eq!(reasoning_breadth("flip alpha, keep beta", &s), 2);
    }

    #[test]
    fn heuristic_labels_sentences() {
        let text = "Last round taught me alpha matters. Next I will flip beta.";
        let a = annotate("r", 2, text, &symbol_names(10), &ClassifyMode::Heuristic, &Lexicon::default());
        let labels: Vec<_> = a.segments.iter().map(|s| s.label).collect();
        assert_eq!(labels, [SegmentLabel::Backward, SegmentLabel::Forward]);
        assert_eq!(a.backward_chars, "Last round taught me alpha matters.".len());
        assert_eq!(a.forward_chars, "Next I will flip beta.".len());
        assert_eq!(a.breadth, 2);
    }

    #[test]
    fn empty_text_is_all_zero() {
        let a = annotate("r", 1, "", &symbol_names(10), &ClassifyMode::Heuristic, &Lexicon::default());
        assert!(a.segments.is_empty());
        assert_eq!((a.forward_chars, a.backward_chars, a.breadth), (0, 0, 0));
        assert!(a.empty_text);
    }

    #[test]
    fn ties_go_backward() {
        let lex = Lexicon::default();
        assert_eq!(lex.label("Previously it dropped, next I will switch."), SegmentLabel::Backward);
        assert_eq!(lex.label("Here is my answer."), SegmentLabel::Other);
    }

    #[test]
    fn llm_mode_falls_back_on_garbage() {
        let client = LlmClient::with_provider(ScriptedProvider::new(["I cannot label that."]));
        let cfg = ProviderConfig { kind: ProviderKind::Mock, ..Default::default() };
        let rubric = Rubric::default();
        let mode = ClassifyMode::Llm { client: &client, cfg: &cfg, rubric: &rubric };
        let a = annotate("r", 1, "Next I will try beta.", &symbol_names(10), &mode, &Lexicon::default());
        assert_eq!(a.classifier, ClassifierKind::Heuristic);
        assert!(a.fallback_reason.unwrap().contains("classifier format"));
        assert_eq!(a.segments[0].label, SegmentLabel::Forward);
    }

    #[test]
    fn llm_mode_uses_labels() {
        let client = LlmClient::with_provider(ScriptedProvider::new(["1: other"]));
        let cfg = ProviderConfig { kind: ProviderKind::Mock, ..Default::default() };
        let rubric = Rubric::default();
        let mode = ClassifyMode::Llm { client: &client, cfg: &cfg, rubric: &rubric };
        let a = annotate("r", 1, "Next I will try beta.", &symbol_names(10), &mode, &Lexicon::default());
        assert_eq!(a.classifier, ClassifierKind::Llm);
        assert_eq!(a.forward_chars, 0);
    }

    proptest! {
        #[test]
        fn counts_bounded_by_text(s in "[a-zA-Z .!?\\n]{0,200}") {
            let syms = symbol_names(10);
            let a = annotate("r", 1, &s, &syms, &ClassifyMode::Heuristic, &Lexicon::default());
            prop_assert!(a.forward_chars + a.backward_chars <= s.chars().count());
            prop_assert!(a.breadth <= syms.len());
            prop_assert!(a.breadth <= attention_breadth(&s, &syms));
            if crate::llm_client::answer_span(&s, &syms).is_none() {
                prop_assert_eq!(a.breadth == 0, !syms.iter().any(|x| text::tokenize(&s).contains(x)));
            }
            let again = annotate("r", 1, &s, &syms, &ClassifyMode::Heuristic, &Lexicon::default());
            prop_assert_eq!(a, again);
        }

        #[test]
        fn ratio_monotone_in_forward(f in 0usize..10_000, extra in 1usize..100, b in 0usize..10_000) {
            prop_assert!(forward_ratio(&ann(f + extra, b)) > forward_ratio(&ann(f, b)));
        }
    }
}
