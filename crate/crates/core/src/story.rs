//! User stories in the `As a <who>, I want <what> so that <why>` form.
//!
//! The grammar accepted here:
//!
//! ```text
//! As (a|an|the) <who>[,] I (want|need) [to] [be able to] <what>[,] (so that|in order to) <why>
//! ```
//!
//! Keywords are matched case-insensitively on word boundaries. `who` runs up
//! to the first `I want`/`I need`; the connector binding `why` is the *last*
//! `so that`/`in order to` after the verb, so a nested `so that` stays inside
//! `what`. Absent elements are reported, never guessed.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diagnostic::{Diagnostic, DiagnosticId, DiagnosticKind, Span};
use crate::text::{self, find_first, find_last, keywords_at, skip_ws, slice};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StoryId(pub String);

impl StoryId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StoryId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for StoryId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Element {
    Who,
    What,
    Why,
}

impl Element {
    pub const ALL: [Element; 3] = [Element::Who, Element::What, Element::Why];

    pub fn name(self) -> &'static str {
        match self {
            Element::Who => "who",
            Element::What => "what",
            Element::Why => "why",
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Lifecycle of a story through the pipeline. The declaration order is the
/// legal forward order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StoryStatus {
    Draft,
    Normalized,
    AmbiguitiesPending,
    Resolved,
    Described,
}

impl StoryStatus {
    /// Forward moves along the lifecycle are legal, as is a reset to `Draft`
    /// after the text is edited.
    pub fn can_transition_to(self, to: StoryStatus) -> bool {
        to > self || (to == StoryStatus::Draft && self != StoryStatus::Draft)
    }
}

impl fmt::Display for StoryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal status transition {from} -> {to}")]
pub struct TransitionError {
    pub from: StoryStatus,
    pub to: StoryStatus,
}

/// A verbatim slice of the story text, by character offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl ElementSpan {
    fn from_chars(chars: &[char], start: usize, end: usize) -> Self {
        Self {
            text: slice(chars, start, end),
            start,
            end,
        }
    }

    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserStory {
    pub id: StoryId,
    raw_text: String,
    who: Option<ElementSpan>,
    what: Option<ElementSpan>,
    why: Option<ElementSpan>,
    status: StoryStatus,
    /// Bumped on every text change.
    #[serde(default)]
    revision: u64,
}

impl UserStory {
    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn status(&self) -> StoryStatus {
        self.status
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn who(&self) -> Option<&ElementSpan> {
        self.who.as_ref()
    }

    pub fn what(&self) -> Option<&ElementSpan> {
        self.what.as_ref()
    }

    pub fn why(&self) -> Option<&ElementSpan> {
        self.why.as_ref()
    }

    pub fn element(&self, element: Element) -> Option<&ElementSpan> {
        match element {
            Element::Who => self.who(),
            Element::What => self.what(),
            Element::Why => self.why(),
        }
    }

    pub fn missing(&self) -> BTreeSet<Element> {
        Element::ALL
            .into_iter()
            .filter(|e| self.element(*e).is_none())
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.who.is_some() && self.what.is_some() && self.why.is_some()
    }

    pub fn char_len(&self) -> usize {
        text::char_len(&self.raw_text)
    }

    /// Replaces the text, re-parses it and resets the story to `Draft`.
    pub fn replace_text(&mut self, raw: &str) -> ParseResult {
        let parsed = parse_elements(raw);
        self.raw_text = raw.to_string();
        self.who = parsed.who.clone();
        self.what = parsed.what.clone();
        self.why = parsed.why.clone();
        self.status = StoryStatus::Draft;
        self.revision += 1;
        ParseResult {
            story: self.clone(),
            missing: parsed.missing(),
            malformed: parsed.malformed,
        }
    }

    /// Moves the story forward. Reaching `Normalized` or beyond requires all
    /// three elements.
    pub fn advance(&mut self, to: StoryStatus) -> Result<(), TransitionError> {
        if to == self.status {
            return Ok(());
        }
        let complete_ok = to == StoryStatus::Draft || self.is_complete();
        if !self.status.can_transition_to(to) || !complete_ok {
            return Err(TransitionError {
                from: self.status,
                to,
            });
        }
        self.status = to;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseResult {
    pub story: UserStory,
    pub missing: BTreeSet<Element>,
    /// Elements whose text was located but does not form a valid clause.
    /// Every malformed element is also in `missing`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub malformed: Vec<(Element, ElementSpan)>,
}

/// Parses `raw` into a new `Draft` story.
pub fn parse_story(id: impl Into<StoryId>, raw: &str) -> ParseResult {
    let parsed = parse_elements(raw);
    let story = UserStory {
        id: id.into(),
        raw_text: raw.to_string(),
        who: parsed.who.clone(),
        what: parsed.what.clone(),
        why: parsed.why.clone(),
        status: StoryStatus::Draft,
        revision: 0,
    };
    ParseResult {
        story,
        missing: parsed.missing(),
        malformed: parsed.malformed,
    }
}

/// Emits one `FormatViolation` per missing element. Missing elements carry an
/// empty span at the place the clause was expected; malformed ones point at
/// the offending text.
pub fn validate_format(story: &UserStory) -> Vec<Diagnostic> {
    let parsed = parse_elements(story.raw_text());
    let len = story.char_len();
    let mut out = Vec::new();
    for element in parsed.missing() {
        let malformed = parsed.malformed.iter().find(|(e, _)| *e == element);
        let (span, message) = match malformed {
            Some((_, s)) => (
                s.span(),
                format!(
                    "the {element} element is malformed: \"{}\" is not a complete clause",
                    s.text
                ),
            ),
            None => {
                let at = match element {
                    Element::Who => 0,
                    Element::What => parsed.who.as_ref().map_or(0, |w| w.end),
                    Element::Why => len,
                };
                (
                    Span::new(at, at),
                    format!("the {element} element is missing; expected {}", expected_clause(element)),
                )
            }
        };
        out.push(Diagnostic::new(
            DiagnosticId(format!("{}#{}:F-{}", story.id, story.revision(), element)),
            story.id.clone(),
            DiagnosticKind::FormatViolation,
            span,
            text::char_slice(story.raw_text(), span.start, span.end),
            message,
            Some(element),
        ));
    }
    out
}

fn expected_clause(element: Element) -> &'static str {
    match element {
        Element::Who => "\"As a <role>\"",
        Element::What => "\"I want to <action>\"",
        Element::Why => "\"so that <benefit>\"",
    }
}

pub(crate) const ARTICLES: [&str; 3] = ["a", "an", "the"];
pub(crate) const VERBS: [&str; 2] = ["want", "need"];
pub(crate) const CONNECTORS: [&str; 2] = ["so that", "in order to"];

pub(crate) const WANT_MARKERS: &[&[&str]] = &[&["i", "want"], &["i", "need"]];
pub(crate) const CONNECTOR_MARKERS: &[&[&str]] = &[&["so", "that"], &["in", "order", "to"]];
pub(crate) const WHO_MARKERS: &[&[&str]] = &[&["as", "a"], &["as", "an"], &["as", "the"]];

/// Words the template itself contributes.
pub(crate) const TEMPLATE_WORDS: &[&str] = &[
    "as", "a", "an", "the", "i", "want", "need", "to", "be", "able", "so", "that", "in", "order",
];

#[derive(Debug, Clone, Default)]
pub(crate) struct ParsedElements {
    pub who: Option<ElementSpan>,
    pub what: Option<ElementSpan>,
    pub why: Option<ElementSpan>,
    pub malformed: Vec<(Element, ElementSpan)>,
}

impl ParsedElements {
    pub fn missing(&self) -> BTreeSet<Element> {
        let mut m = BTreeSet::new();
        if self.who.is_none() {
            m.insert(Element::Who);
        }
        if self.what.is_none() {
            m.insert(Element::What);
        }
        if self.why.is_none() {
            m.insert(Element::Why);
        }
        m
    }
}

/// Template pieces of a verb clause after `I want|need`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct VerbClause {
    pub body_start: usize,
    pub has_to: bool,
    pub able: bool,
}

pub(crate) fn verb_clause(chars: &[char], after_verb: usize) -> VerbClause {
    let mut i = skip_ws(chars, after_verb);
    let mut has_to = false;
    let mut able = false;
    if let Some(end) = keywords_at(chars, i, &["to"]) {
        has_to = true;
        i = skip_ws(chars, end);
    }
    while let Some(end) = keywords_at(chars, i, &["be", "able", "to"]) {
        able = true;
        i = skip_ws(chars, end);
    }
    VerbClause {
        body_start: i,
        has_to,
        able,
    }
}

/// Trims leading whitespace/commas and trailing whitespace/punctuation.
pub(crate) fn trim_range(chars: &[char], mut start: usize, mut end: usize) -> Option<(usize, usize)> {
    while start < end && (chars[start].is_whitespace() || chars[start] == ',') {
        start += 1;
    }
    while end > start && (chars[end - 1].is_whitespace() || ",.;:!?".contains(chars[end - 1])) {
        end -= 1;
    }
    (start < end).then_some((start, end))
}

pub(crate) fn is_bare_single_word(chars: &[char], start: usize, end: usize) -> bool {
    text::tokenize_chars(&chars[start..end])
        .iter()
        .filter(|t| t.is_wordlike())
        .count()
        < 2
}

pub(crate) fn parse_elements(raw: &str) -> ParsedElements {
    let chars: Vec<char> = raw.chars().collect();
    let n = chars.len();
    let lead = skip_ws(&chars, 0);
    let who_start = WHO_MARKERS
        .iter()
        .find_map(|words| keywords_at(&chars, lead, words))
        .map(|end| skip_ws(&chars, end));

    let search_from = who_start.unwrap_or(0);
    let want = find_first(&chars, search_from, WANT_MARKERS);
    let clause = want.map(|w| verb_clause(&chars, w.end));
    let conn_from = clause.map(|c| c.body_start).or(who_start).unwrap_or(0);
    let conn = find_last(&chars, conn_from, CONNECTOR_MARKERS);

    let mut out = ParsedElements::default();
    if let Some(ws) = who_start {
        let end = want.map(|w| w.start).or(conn.map(|c| c.start)).unwrap_or(n);
        out.who = trim_range(&chars, ws, end.max(ws)).map(|(s, e)| ElementSpan::from_chars(&chars, s, e));
    }
    if let Some(c) = clause {
        let end = conn.map(|h| h.start).unwrap_or(n);
        if let Some((s, e)) = trim_range(&chars, c.body_start, end.max(c.body_start)) {
            let span = ElementSpan::from_chars(&chars, s, e);
            if !c.has_to && !c.able && is_bare_single_word(&chars, s, e) {
                out.malformed.push((Element::What, span));
            } else {
                out.what = Some(span);
            }
        }
    }
    if let Some(c) = conn {
        out.why = trim_range(&chars, c.end, n).map(|(s, e)| ElementSpan::from_chars(&chars, s, e));
    }
    out
}
