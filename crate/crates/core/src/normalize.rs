//! Spelling and format correction ahead of ambiguity analysis.
//!
//! A correction is a proposal: the developer accepts or rejects it. The rule
//! engine is deterministic and never fabricates a missing who/what/why; an
//! optional external service may be plugged in behind [`CorrectionService`],
//! with the rule engine as fallback.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, DiffTag};

use crate::diagnostic::Span;
use crate::story::{
    parse_elements, trim_range, verb_clause, Element,
    ElementSpan, StoryId, StoryStatus, UserStory, ARTICLES, CONNECTORS, CONNECTOR_MARKERS,
    TEMPLATE_WORDS, VERBS, WANT_MARKERS, WHO_MARKERS,
};
use crate::text::{self, find_first, find_last, keywords_at, slice, TokenKind};

#[derive(Debug, thiserror::Error)]
pub enum NormalizeError {
    #[error("story {id} is {actual}, corrections require Draft")]
    WrongState { id: StoryId, actual: StoryStatus },
    #[error("spell lexicon is empty")]
    LexiconEmpty,
    #[error("proposal for story {0} is stale: the story text changed after it was made")]
    StaleProposal(StoryId),
    #[error("proposal belongs to story {proposal}, not {story}")]
    ForeignProposal { proposal: StoryId, story: StoryId },
    #[error("invalid correction service config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ServiceError {
    #[error("correction service unreachable: {0}")]
    Unreachable(String),
    #[error("correction service returned an invalid reply: {0}")]
    BadReply(String),
}

/// An external text-correction endpoint: `{text}` in, `{corrected}` out.
pub trait CorrectionService: Send + Sync {
    fn correct(&self, text: &str) -> Result<String, ServiceError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionServiceConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub enabled: bool,
}

impl Default for CorrectionServiceConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout_ms: 5_000,
            enabled: false,
        }
    }
}

impl CorrectionServiceConfig {
    pub fn validate(&self) -> Result<(), NormalizeError> {
        if self.enabled && self.endpoint.trim().is_empty() {
            return Err(NormalizeError::Config("enabled without an endpoint".into()));
        }
        Ok(())
    }
}

/// Dictionary of known lowercase words.
#[derive(Debug, Clone, Default)]
pub struct SpellLexicon {
    words: HashSet<String>,
    alphabet: Vec<char>,
}

impl SpellLexicon {
    /// One word per line; blank lines and `#` comments are skipped.
    pub fn from_text(src: &str) -> Self {
        Self::from_words(
            src.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: HashSet<String> = words.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        let mut alphabet: Vec<char> = words.iter().flat_map(|w| w.chars()).collect();
        alphabet.sort_unstable();
        alphabet.dedup();
        Self { words, alphabet }
    }

    /// Adds regular English inflections of every entry (`-s`, `-es`, `-ed`,
    /// `-ing`, `-ies`, ...) so base-form word lists do not flag them as typos.
    pub fn with_inflections(self) -> Self {
        let mut extra = Vec::new();
        for w in &self.words {
            if w.chars().count() < 2 {
                continue;
            }
            let stem_e = w.strip_suffix('e');
            let stem_y = w.strip_suffix('y').filter(|s| !s.ends_with(['a', 'e', 'o', 'u']));
            if let Some(s) = stem_y {
                extra.extend([format!("{s}ies"), format!("{s}ied"), format!("{w}ing")]);
            } else if let Some(s) = stem_e {
                extra.extend([format!("{w}s"), format!("{w}d"), format!("{s}ing")]);
            } else if w.ends_with(['s', 'x', 'z']) || w.ends_with("ch") || w.ends_with("sh") {
                extra.extend([format!("{w}es"), format!("{w}ed"), format!("{w}ing")]);
            } else {
                extra.extend([format!("{w}s"), format!("{w}ed"), format!("{w}ing")]);
            }
            extra.push(format!("{w}ly"));
        }
        Self::from_words(self.words.into_iter().chain(extra))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    /// The lexicographically smallest entry at edit distance exactly 1 from
    /// `word`, or `None` if the word is known or nothing is that close.
    pub fn suggest(&self, word: &str) -> Option<String> {
        let w: Vec<char> = word.to_lowercase().chars().collect();
        if self.words.contains(&w.iter().collect::<String>()) {
            return None;
        }
        let mut best: Option<String> = None;
        let mut consider = |cand: Vec<char>| {
            let s: String = cand.into_iter().collect();
            if self.words.contains(&s) && best.as_ref().map_or(true, |b| s < *b) {
                best = Some(s);
            }
        };
        for i in 0..w.len() {
            let mut c = w.clone();
            c.remove(i);
            consider(c);
        }
        for i in 0..w.len() {
            for &a in &self.alphabet {
                if a != w[i] {
                    let mut c = w.clone();
                    c[i] = a;
                    consider(c);
                }
            }
        }
        for i in 0..=w.len() {
            for &a in &self.alphabet {
                let mut c = w.clone();
                c.insert(i, a);
                consider(c);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditReason {
    Spelling,
    Format,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub span: Span,
    pub replacement: String,
    pub reason: EditReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectionSource {
    RuleEngine,
    ExternalService,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionProposal {
    pub story_id: StoryId,
    /// Story revision the proposal was computed against.
    pub story_revision: u64,
    pub original: String,
    pub corrected: String,
    pub edits: Vec<Edit>,
    pub source: CorrectionSource,
    #[serde(default)]
    pub accepted: bool,
    /// Words not in the lexicon and not within one edit of any entry; left
    /// untouched.
    #[serde(default)]
    pub unknown_words: Vec<ElementSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_error: Option<String>,
}

impl CorrectionProposal {
    pub fn is_noop(&self) -> bool {
        self.edits.is_empty()
    }
}

/// Applies sorted, non-overlapping edits to `original`.
pub fn apply_edits(original: &str, edits: &[Edit]) -> String {
    let chars: Vec<char> = original.chars().collect();
    let mut out = String::with_capacity(original.len());
    let mut pos = 0;
    for e in edits {
        out.extend(&chars[pos..e.span.start]);
        out.push_str(&e.replacement);
        pos = e.span.end;
    }
    out.extend(&chars[pos..]);
    out
}

pub struct Normalizer {
    lexicon: SpellLexicon,
    service: Option<Arc<dyn CorrectionService>>,
}

impl Normalizer {
    pub fn new(lexicon: SpellLexicon) -> Self {
        Self {
            lexicon,
            service: None,
        }
    }

    pub fn with_service(mut self, service: Arc<dyn CorrectionService>) -> Self {
        self.service = Some(service);
        self
    }

    pub fn lexicon(&self) -> &SpellLexicon {
        &self.lexicon
    }

    pub fn propose(&self, story: &UserStory) -> Result<CorrectionProposal, NormalizeError> {
        if story.status() != StoryStatus::Draft {
            return Err(NormalizeError::WrongState {
                id: story.id.clone(),
                actual: story.status(),
            });
        }
        let original = story.raw_text();
        let mut service_error = None;
        if let Some(service) = &self.service {
            match service.correct(original) {
                Ok(reply) if invents_elements(original, &reply) => {
                    service_error = Some("service reply added a missing element; discarded".into());
                }
                Ok(reply) => {
                    return Ok(CorrectionProposal {
                        story_id: story.id.clone(),
                        story_revision: story.revision(),
                        original: original.to_string(),
                        edits: diff_edits(original, &reply),
                        corrected: reply,
                        source: CorrectionSource::ExternalService,
                        accepted: false,
                        unknown_words: Vec::new(),
                        service_error: None,
                    });
                }
                Err(e) => service_error = Some(e.to_string()),
            }
        }
        let (corrected, unknown_words) = self.rule_engine(original)?;
        Ok(CorrectionProposal {
            story_id: story.id.clone(),
            story_revision: story.revision(),
            original: original.to_string(),
            edits: diff_edits(original, &corrected),
            corrected,
            source: CorrectionSource::RuleEngine,
            accepted: false,
            unknown_words,
            service_error,
        })
    }

    /// Spell-checks each word, then re-assembles the template.
    pub fn rule_engine(&self, original: &str) -> Result<(String, Vec<ElementSpan>), NormalizeError> {
        if self.lexicon.is_empty() {
            return Err(NormalizeError::LexiconEmpty);
        }
        let chars: Vec<char> = original.chars().collect();
        let mut spelled = String::with_capacity(original.len());
        let mut unknown = Vec::new();
        let mut pos = 0;
        for tok in text::tokenize_chars(&chars) {
            if !self.is_checkable(&tok.text, tok.kind) {
                continue;
            }
            match self.lexicon.suggest(&tok.text) {
                Some(fix) => {
                    spelled.extend(&chars[pos..tok.start]);
                    spelled.push_str(&match_case(&tok.text, &fix));
                    pos = tok.end;
                }
                None if !self.lexicon.contains(&tok.text) => unknown.push(ElementSpan {
                    text: tok.text.clone(),
                    start: tok.start,
                    end: tok.end,
                }),
                None => {}
            }
        }
        spelled.extend(&chars[pos..]);
        let corrected = reassemble(&spelled).unwrap_or(spelled);
        Ok((corrected, unknown))
    }

    fn is_checkable(&self, word: &str, kind: TokenKind) -> bool {
        let lower = word.to_lowercase();
        kind == TokenKind::Word
            && word.chars().count() >= 3
            && word.chars().all(char::is_alphabetic)
            && !(word.chars().all(char::is_uppercase))
            && !TEMPLATE_WORDS.contains(&lower.as_str())
    }
}

fn match_case(original: &str, fix: &str) -> String {
    let mut oc = original.chars();
    match oc.next() {
        Some(first) if first.is_uppercase() => {
            let mut f = fix.chars();
            f.next()
                .map(|c| c.to_uppercase().chain(f).collect())
                .unwrap_or_default()
        }
        _ => fix.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptOutcome {
    pub status: StoryStatus,
    pub missing: BTreeSet<Element>,
}

/// Applies (or rejects) a proposal. Accepted text reaches `Normalized` only
/// when all three elements are present; otherwise the story stays `Draft`.
pub fn accept_correction(
    story: &mut UserStory,
    proposal: &mut CorrectionProposal,
    accept: bool,
) -> Result<AcceptOutcome, NormalizeError> {
    if proposal.story_id != story.id {
        return Err(NormalizeError::ForeignProposal {
            proposal: proposal.story_id.clone(),
            story: story.id.clone(),
        });
    }
    if story.status() != StoryStatus::Draft {
        return Err(NormalizeError::WrongState {
            id: story.id.clone(),
            actual: story.status(),
        });
    }
    if proposal.original != story.raw_text() || proposal.story_revision != story.revision() {
        return Err(NormalizeError::StaleProposal(story.id.clone()));
    }
    if accept {
        proposal.accepted = true;
        if proposal.corrected != story.raw_text() {
            story.replace_text(&proposal.corrected.clone());
        }
        if story.is_complete() {
            story
                .advance(StoryStatus::Normalized)
                .expect("complete draft can be normalized");
        }
    }
    Ok(AcceptOutcome {
        status: story.status(),
        missing: story.missing(),
    })
}

/// Elements present in `reply` whose template keyword is absent from `original`.
fn invents_elements(original: &str, reply: &str) -> bool {
    let before = recoverable_elements(original);
    let after: BTreeSet<Element> = Element::ALL
        .into_iter()
        .filter(|e| !parse_elements(reply).missing().contains(e))
        .collect();
    !after.is_subset(&before)
}

fn recoverable_elements(text: &str) -> BTreeSet<Element> {
    let mut set: BTreeSet<Element> = Element::ALL
        .into_iter()
        .filter(|e| !parse_elements(text).missing().contains(e))
        .collect();
    if let Some(parts) = loose_parts(text) {
        if parts.who.is_some() {
            set.insert(Element::Who);
        }
        if parts.what.is_some() {
            set.insert(Element::What);
        }
        if parts.why.is_some() {
            set.insert(Element::Why);
        }
    }
    set
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct WhoPart {
    article: usize,
    text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct WhatPart {
    verb: usize,
    has_to: bool,
    able: bool,
    text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct WhyPart {
    connector: usize,
    comma_before: bool,
    text: String,
}

/// Template clauses found anywhere in the text, in any order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct StoryParts {
    who: Option<WhoPart>,
    what: Option<WhatPart>,
    why: Option<WhyPart>,
}

#[derive(Clone, Copy)]
enum Marker {
    Who(usize),
    Want(usize),
    Why(usize),
}

fn at_clause_boundary(chars: &[char], at: usize) -> bool {
    chars[..at]
        .iter()
        .rev()
        .find(|c| !c.is_whitespace())
        .map_or(true, |c| ",.;".contains(*c))
}

fn loose_parts(text: &str) -> Option<StoryParts> {
    let chars: Vec<char> = text.chars().collect();
    let mut markers: Vec<(usize, usize, Marker)> = Vec::new();
    if let Some(h) = (0..chars.len())
        .filter(|&i| at_clause_boundary(&chars, i))
        .find_map(|i| {
            WHO_MARKERS
                .iter()
                .enumerate()
                .find_map(|(k, w)| keywords_at(&chars, i, w).map(|end| (i, end, k)))
        })
    {
        markers.push((h.0, h.1, Marker::Who(h.2)));
    }
    if let Some(h) = find_first(&chars, 0, WANT_MARKERS) {
        markers.push((h.start, h.end, Marker::Want(h.which)));
    }
    if let Some(h) = find_last(&chars, 0, CONNECTOR_MARKERS) {
        markers.push((h.start, h.end, Marker::Why(h.which)));
    }
    if markers.is_empty() {
        return None;
    }
    markers.sort_by_key(|m| m.0);
    if markers.windows(2).any(|w| w[1].0 < w[0].1) {
        return None;
    }
    if trim_range(&chars, 0, markers[0].0).is_some() {
        return None;
    }
    let mut parts = StoryParts::default();
    for (k, &(start, end, marker)) in markers.iter().enumerate() {
        let limit = markers.get(k + 1).map_or(chars.len(), |m| m.0);
        match marker {
            Marker::Who(article) => {
                if let Some((s, e)) = trim_range(&chars, end, limit) {
                    parts.who = Some(WhoPart {
                        article,
                        text: slice(&chars, s, e),
                    });
                }
            }
            Marker::Want(verb) => {
                let clause = verb_clause(&chars, end);
                if let Some((s, e)) = trim_range(&chars, clause.body_start.min(limit), limit) {
                    parts.what = Some(WhatPart {
                        verb,
                        has_to: clause.has_to,
                        able: clause.able,
                        text: slice(&chars, s, e),
                    });
                }
            }
            Marker::Why(connector) => {
                let comma_before = chars[..start]
                    .iter()
                    .rev()
                    .find(|c| !c.is_whitespace())
                    .is_some_and(|c| *c == ',');
                if let Some((s, e)) = trim_range(&chars, end, limit) {
                    parts.why = Some(WhyPart {
                        connector,
                        comma_before,
                        text: slice(&chars, s, e),
                    });
                }
            }
        }
    }
    Some(parts)
}

fn assemble(parts: &StoryParts) -> Option<String> {
    let mut out = String::new();
    if let Some(who) = &parts.who {
        out.push_str(&format!("As {} {}", ARTICLES[who.article], who.text));
    }
    if let Some(what) = &parts.what {
        if !out.is_empty() {
            out.push_str(", ");
        }
        out.push_str("I ");
        out.push_str(VERBS[what.verb]);
        out.push(' ');
        if what.has_to {
            out.push_str("to ");
        }
        if what.able {
            out.push_str("be able to ");
        }
        out.push_str(&what.text);
    }
    if let Some(why) = &parts.why {
        if !out.is_empty() {
            out.push_str(if why.comma_before { ", " } else { " " });
        }
        out.push_str(CONNECTORS[why.connector]);
        out.push(' ');
        out.push_str(&why.text);
    }
    if out.is_empty() {
        return None;
    }
    out.push('.');
    let mut c = out.chars();
    let first = c.next()?;
    Some(first.to_uppercase().chain(c).collect())
}

/// Rewrites the template clauses into canonical order and spelling, or
/// `None` when the text cannot be re-assembled without losing or inventing
/// content.
fn reassemble(text: &str) -> Option<String> {
    let parts = loose_parts(text)?;
    let canonical = assemble(&parts)?;
    (loose_parts(&canonical).as_ref() == Some(&parts)).then_some(canonical)
}

fn segments(s: &str) -> Vec<(String, usize)> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        let c = chars[i];
        if c.is_whitespace() {
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
        } else if c.is_alphanumeric() {
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
        } else {
            i += 1;
        }
        out.push((slice(&chars, start, i), start));
    }
    out
}

/// Token-level diff from `original` to `corrected`, as sorted and
/// non-overlapping edits over `original`'s character offsets.
pub fn diff_edits(original: &str, corrected: &str) -> Vec<Edit> {
    let old = segments(original);
    let new = segments(corrected);
    let old_s: Vec<&str> = old.iter().map(|s| s.0.as_str()).collect();
    let new_s: Vec<&str> = new.iter().map(|s| s.0.as_str()).collect();
    let old_len = text::char_len(original);
    let offset = |idx: usize| old.get(idx).map_or(old_len, |s| s.1);

    let mut edits: Vec<Edit> = Vec::new();
    let mut pending: Option<(std::ops::Range<usize>, std::ops::Range<usize>)> = None;
    let flush = |p: Option<(std::ops::Range<usize>, std::ops::Range<usize>)>, edits: &mut Vec<Edit>| {
        if let Some((o, n)) = p {
            let replacement: String = new_s[n].concat();
            let removed: String = old_s[o.clone()].concat();
            edits.push(Edit {
                span: Span::new(offset(o.start), offset(o.end)),
                reason: classify(&removed, &replacement),
                replacement,
            });
        }
    };
    // Insert ops do not report a usable old index, so track the cursor here.
    let mut cursor = 0;
    for op in capture_diff_slices(Algorithm::Myers, &old_s, &new_s) {
        let (tag, o, n) = op.as_tag_tuple();
        let o = match tag {
            DiffTag::Equal => {
                flush(pending.take(), &mut edits);
                cursor = o.end;
                continue;
            }
            DiffTag::Insert => cursor..cursor,
            DiffTag::Delete | DiffTag::Replace => o,
        };
        cursor = o.end;
        pending = Some(match pending.take() {
            Some((po, pn)) => (po.start..o.end, pn.start..n.end),
            None => (o, n),
        });
    }
    flush(pending.take(), &mut edits);
    edits
}

fn classify(removed: &str, replacement: &str) -> EditReason {
    let single_word = |s: &str| !s.is_empty() && s.chars().all(char::is_alphabetic);
    if single_word(removed) && single_word(replacement) && !removed.eq_ignore_ascii_case(replacement) {
        EditReason::Spelling
    } else {
        EditReason::Format
    }
}
