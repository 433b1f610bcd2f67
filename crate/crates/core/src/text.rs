//! Tokenization and code-point addressing shared by every module.
//!
//! Offsets throughout the crate count Unicode scalar values, not bytes.

/// A token with its code-point span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on whitespace and punctuation boundaries.
///
/// Runs of alphanumeric characters form one token; every other
/// non-whitespace character is a token of its own.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run: Option<(usize, String)> = None;
    for (pos, ch) in text.chars().enumerate() {
        if ch.is_alphanumeric() {
            match run.as_mut() {
                Some((_, buf)) => buf.push(ch),
                None => run = Some((pos, ch.to_string())),
            }
            continue;
        }
        if let Some((start, buf)) = run.take() {
            tokens.push(Token {
                end: pos,
                text: buf,
                start,
            });
        }
        if !ch.is_whitespace() {
            tokens.push(Token {
                text: ch.to_string(),
                start: pos,
                end: pos + 1,
            });
        }
    }
    if let Some((start, buf)) = run {
        let end = start + buf.chars().count();
        tokens.push(Token {
            text: buf,
            start,
            end,
        });
    }
    tokens
}

/// Lowercased token strings.
pub fn lower_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .map(|t| t.text.to_lowercase())
        .collect()
}

/// Canonical phrase key: lowercased tokens joined by one space.
pub fn normalize_phrase(text: &str) -> String {
    lower_tokens(text).join(" ")
}

/// Uppercase, trim, collapse internal whitespace.
pub fn normalize_drug(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_uppercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Code-point indexed view over a string.
pub struct CharIndex<'a> {
    text: &'a str,
    // byte offset of every code point, plus the total length
    offsets: Vec<usize>,
}

impl<'a> CharIndex<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        offsets.push(text.len());
        CharIndex { text, offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `None` when the range is inverted or out of bounds.
    pub fn slice(&self, start: usize, end: usize) -> Option<&'a str> {
        if start > end || end > self.len() {
            return None;
        }
        Some(&self.text[self.offsets[start]..self.offsets[end]])
    }
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}
