//! Sentence segmentation and whole-word matching shared by the answer
//! parser, the annotator and the label classifier.

/// A sentence located in a larger text. Offsets are byte offsets into the
/// source; `text` excludes surrounding whitespace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence<'a> {
    pub start: usize,
    pub end: usize,
    pub text: &'a str,
}

/// Splits on line breaks and on `.`, `!`, `?` when followed by whitespace or
/// the end of the text, so decimals such as `0.55` stay intact.
pub fn sentences(text: &str) -> Vec<Sentence<'_>> {
    let mut out = Vec::new();
    let mut push = |from: usize, to: usize| {
        let raw = &text[from..to];
        let trimmed = raw.trim();
        if !trimmed.is_empty() {
            let lead = raw.len() - raw.trim_start().len();
            out.push(Sentence { start: from + lead, end: from + lead + trimmed.len(), text: trimmed });
        }
    };
    let mut from = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '\n' | '\r' => {
                push(from, i);
                from = i + c.len_utf8();
            }
            '.' | '!' | '?' => {
                let boundary = chars.peek().map_or(true, |&(_, next)| next.is_whitespace());
                if boundary {
                    push(from, i + 1);
                    from = i + 1;
                }
            }
            _ => {}
        }
    }
    push(from, text.len());
    out
}

/// Lower-cased alphanumeric words with their byte spans.
pub fn words(text: &str) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            out.push((s, i, text[s..i].to_lowercase()));
        }
    }
    if let Some(s) = start {
        out.push((s, text.len(), text[s..].to_lowercase()));
    }
    out
}

/// True when `phrase` (one or more words) occurs in `tokens` as a run of
/// whole words.
pub fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}

pub fn tokenize(phrase: &str) -> Vec<String> {
    words(phrase).into_iter().map(|(_, _, w)| w).collect()
}
