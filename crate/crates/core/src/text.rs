//! Span-preserving tokenizer, keyword matching over character offsets and a
//! small suffix-stripping stemmer shared by the detectors and the rule matcher.
//!
//! All offsets are counted in Unicode scalar values.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Number,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub kind: TokenKind,
}

impl Token {
    pub fn new(text: impl Into<String>, start: usize, end: usize, kind: TokenKind) -> Self {
        Self {
            text: text.into(),
            start,
            end,
            kind,
        }
    }

    pub fn is_wordlike(&self) -> bool {
        self.kind != TokenKind::Punctuation
    }
}

/// Splits `text` into words, numbers and single punctuation characters.
///
/// Whitespace is skipped and never part of a token. A run of alphanumeric
/// characters is one token; it is a `Number` when every character is numeric.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    tokenize_chars(&chars)
}

pub(crate) fn tokenize_chars(chars: &[char]) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let kind = if text.chars().all(char::is_numeric) {
                TokenKind::Number
            } else {
                TokenKind::Word
            };
            tokens.push(Token::new(text, start, i, kind));
        } else {
            tokens.push(Token::new(c.to_string(), i, i + 1, TokenKind::Punctuation));
            i += 1;
        }
    }
    tokens
}

/// Word and number tokens with possessive `'s` tails removed, the sequence
/// phrase matchers run over.
pub(crate) fn content_tokens(tokens: &[Token]) -> Vec<&Token> {
    let mut out: Vec<&Token> = Vec::with_capacity(tokens.len());
    for (idx, tok) in tokens.iter().enumerate() {
        if !tok.is_wordlike() {
            continue;
        }
        if idx > 0 && tok.text.eq_ignore_ascii_case("s") {
            let prev = &tokens[idx - 1];
            if prev.end == tok.start && is_apostrophe(&prev.text) {
                continue;
            }
        }
        out.push(tok);
    }
    out
}

fn is_apostrophe(s: &str) -> bool {
    matches!(s, "'" | "\u{2019}" | "\u{2018}" | "`")
}

/// Reduces inflected forms to a shared stem: `delete`, `deletes`, `deleted`
/// and `deleting` all become `delet`.
pub fn stem(word: &str) -> String {
    let w = word.to_lowercase();
    let n = w.chars().count();
    let strip = |suffix: &str| -> String { w[..w.len() - suffix.len()].to_string() };
    let mut undouble = false;
    let mut s = if n > 4 && w.ends_with("ies") {
        format!("{}y", strip("ies"))
    } else if n >= 6 && w.ends_with("ing") {
        undouble = true;
        strip("ing")
    } else if n >= 5 && w.ends_with("ed") {
        undouble = true;
        strip("ed")
    } else if n >= 5 && w.ends_with("es") && !w.ends_with("ses") {
        strip("es")
    } else if n >= 4 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") {
        strip("s")
    } else if n >= 4 && w.ends_with('e') {
        strip("e")
    } else {
        w.clone()
    };
    if undouble {
        let tail: Vec<char> = s.chars().rev().take(2).collect();
        if tail.len() == 2 && tail[0] == tail[1] && !"aeioulsz".contains(tail[0]) {
            s.pop();
        }
    }
    if s.ends_with('e') && s.chars().count() >= 4 {
        s.pop();
    }
    s
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Matches the space-separated keyword sequence `words` at `at`, case
/// insensitively and on word boundaries. Returns the end offset.
pub(crate) fn keywords_at(chars: &[char], at: usize, words: &[&str]) -> Option<usize> {
    if at > 0 && at <= chars.len() && is_word_char(chars[at - 1]) {
        return None;
    }
    let mut i = at;
    for (k, word) in words.iter().enumerate() {
        if k > 0 {
            let ws_start = i;
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            if i == ws_start {
                return None;
            }
        }
        for wc in word.chars() {
            match chars.get(i) {
                Some(c) if c.eq_ignore_ascii_case(&wc) => i += 1,
                _ => return None,
            }
        }
    }
    if i < chars.len() && is_word_char(chars[i]) {
        return None;
    }
    Some(i)
}

/// A keyword sequence located in a character buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Hit {
    pub start: usize,
    pub end: usize,
    /// Index of the alternative that matched.
    pub which: usize,
}

pub(crate) fn find_first(chars: &[char], from: usize, alternatives: &[&[&str]]) -> Option<Hit> {
    (from..chars.len()).find_map(|i| hit_at(chars, i, alternatives))
}

pub(crate) fn find_last(chars: &[char], from: usize, alternatives: &[&[&str]]) -> Option<Hit> {
    (from..chars.len()).rev().find_map(|i| hit_at(chars, i, alternatives))
}

fn hit_at(chars: &[char], i: usize, alternatives: &[&[&str]]) -> Option<Hit> {
    alternatives
        .iter()
        .enumerate()
        .find_map(|(which, words)| keywords_at(chars, i, words).map(|end| Hit { start: i, end, which }))
}

pub(crate) fn skip_ws(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() && chars[i].is_whitespace() {
        i += 1;
    }
    i
}

pub(crate) fn slice(chars: &[char], start: usize, end: usize) -> String {
    chars[start..end].iter().collect()
}

/// Number of Unicode scalar values in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Substring by character offsets.
pub fn char_slice(s: &str, start: usize, end: usize) -> String {
    s.chars().skip(start).take(end.saturating_sub(start)).collect()
}
