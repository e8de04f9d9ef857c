//! Tokenization and sentence segmentation.
//!
//! Tokens are maximal runs of word characters (alphanumeric or `_`) plus
//! every standalone punctuation/symbol character. The count is independent
//! of any model vocabulary so token limits are reproducible everywhere.

use std::ops::Range;

/// Abbreviations (lowercased, without the trailing period) that never end a
/// sentence when followed by whitespace.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "gen", "gov", "sen", "rep",
    "rev", "capt", "col", "lt", "sgt", "cpl", "maj", "adm", "vs", "e.g", "i.e", "cf", "al",
    "approx", "no", "vol", "fig", "figs", "eq", "ed", "eds", "inc", "ltd", "co", "corp", "jan",
    "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "u.s",
    "u.k", "u.n", "u.s.a", "d.c", "a.m", "p.m", "ph.d", "dept", "est", "univ",
];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Byte spans of every token in `text`.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            if run_start.is_none() {
                run_start = Some(i);
            }
            continue;
        }
        if let Some(start) = run_start.take() {
            spans.push(start..i);
        }
        if !c.is_whitespace() {
            spans.push(i..i + c.len_utf8());
        }
    }
    if let Some(start) = run_start {
        spans.push(start..text.len());
    }
    spans
}

/// Number of tokens in `text`.
pub fn count_tokens(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if is_word_char(c) {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

/// Lowercased word tokens, punctuation dropped.
pub fn normalized_words(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|r| &text[r])
        .filter(|t| t.chars().all(is_word_char))
        .map(str::to_lowercase)
        .collect()
}

/// A sentence located in its source document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    pub token_count: usize,
    /// Byte span of `text` inside the document.
    pub span: Range<usize>,
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// True when the word ending just before a '.' at `dot` is an abbreviation
/// or a single capital initial.
fn ends_with_abbreviation(text: &str, dot: usize) -> bool {
    let head = &text[..dot];
    let word_start = head
        .char_indices()
        .rev()
        .find(|&(_, c)| c.is_whitespace() || matches!(c, '(' | '"' | '\'' | '['))
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    let word = &head[word_start..];
    if word.is_empty() {
        return false;
    }
    let mut chars = word.chars();
    if let (Some(first), None) = (chars.next(), chars.next()) {
        if first.is_uppercase() {
            return true;
        }
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Splits `doc` into sentences.
///
/// A sentence ends at a run of `.`, `!` or `?` followed by whitespace or the
/// end of input, unless the run is a single `.` closing an abbreviation or a
/// capital initial. Trailing text without a terminator forms a final
/// sentence. Whitespace between sentences is not part of any sentence.
pub fn split_sentences(doc: &str) -> Vec<Sentence> {
    let mut bounds: Vec<Range<usize>> = Vec::new();
    let mut start: Option<usize> = None;
    let chars: Vec<(usize, char)> = doc.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(pos);
        }
        if is_terminator(c) {
            let mut j = i;
            while j + 1 < chars.len() && is_terminator(chars[j + 1].1) {
                j += 1;
            }
            let end = chars[j].0 + chars[j].1.len_utf8();
            let at_boundary = j + 1 >= chars.len() || chars[j + 1].1.is_whitespace();
            let single_dot = i == j && c == '.';
            if at_boundary && !(single_dot && ends_with_abbreviation(doc, pos)) {
                bounds.push(start.take().unwrap_or(pos)..end);
            }
            i = j + 1;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        let end = doc.trim_end().len();
        if end > s {
            bounds.push(s..end);
        }
    }
    bounds
        .into_iter()
        .enumerate()
        .map(|(index, span)| {
            let text = doc[span.clone()].to_string();
            Sentence {
                index,
                token_count: count_tokens(&text),
                text,
                span,
            }
        })
        .collect()
}
