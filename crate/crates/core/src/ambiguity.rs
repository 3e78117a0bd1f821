//! Privacy-relevant ambiguity detection.
//!
//! Three rule-based detectors run over a normalized story:
//!
//! * **Lexical**: leftmost, longest match of vague-term lexicon phrases over
//!   the whole text, comparing stems so `user location` also hits
//!   `user locations`.
//! * **Syntactic**: a coordination inside `what` that joins a second verb
//!   phrase, either active (`..., and delete ...`) or passive/modal
//!   (`..., and previous records can be edited`).
//! * **Pragmatic**: `what` headed by an access verb over a record-like
//!   object with no stated channel (`view my patient's medical records`).
//!
//! Detectors are tuned for recall; false positives are waived with a note.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::diagnostic::{Diagnostic, DiagnosticId, DiagnosticKind, DiagnosticState, Span};
use crate::story::{Element, ElementSpan, StoryId, StoryStatus, UserStory};
use crate::text::{self, content_tokens, stem, tokenize, Token, TokenKind};

#[derive(Debug, thiserror::Error)]
pub enum AmbiguityError {
    #[error("story {id} is {actual}, expected {required}")]
    WrongState {
        id: StoryId,
        actual: StoryStatus,
        required: StoryStatus,
    },
    #[error("unknown diagnostic {0}")]
    UnknownDiagnostic(DiagnosticId),
    #[error("diagnostic {0} is not open")]
    NotOpen(DiagnosticId),
    #[error("a waiver needs a non-empty note")]
    EmptyNote,
    #[error("edited text is missing {0:?}")]
    IncompleteEdit(Vec<Element>),
    #[error("lexicon error: {0}")]
    Lexicon(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VagueTerm {
    pub phrase: String,
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_refinement: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct VagueTermLexicon {
    entries: Vec<VagueTerm>,
    stems: Vec<Vec<String>>,
    by_first: HashMap<String, Vec<usize>>,
}

impl VagueTermLexicon {
    pub fn new(entries: Vec<VagueTerm>) -> Result<Self, AmbiguityError> {
        let mut seen = HashSet::new();
        let mut stems = Vec::with_capacity(entries.len());
        let mut by_first: HashMap<String, Vec<usize>> = HashMap::new();
        for (idx, e) in entries.iter().enumerate() {
            let phrase = e.phrase.trim();
            if phrase.is_empty() || phrase != e.phrase.to_lowercase() {
                return Err(AmbiguityError::Lexicon(format!(
                    "phrase {:?} must be non-empty lowercase",
                    e.phrase
                )));
            }
            if !seen.insert(phrase.to_string()) {
                return Err(AmbiguityError::Lexicon(format!("duplicate phrase {phrase:?}")));
            }
            let toks = tokenize(phrase);
            let words: Vec<String> = content_tokens(&toks).iter().map(|t| stem(&t.text)).collect();
            if words.is_empty() || words.len() > 4 {
                return Err(AmbiguityError::Lexicon(format!(
                    "phrase {phrase:?} must have 1 to 4 words"
                )));
            }
            by_first.entry(words[0].clone()).or_default().push(idx);
            stems.push(words);
        }
        Ok(Self {
            entries,
            stems,
            by_first,
        })
    }

    /// Reads a JSON array of records, or one JSON record per line.
    pub fn from_json(src: &str) -> Result<Self, AmbiguityError> {
        Self::new(parse_records(src)?)
    }

    pub fn entries(&self) -> &[VagueTerm] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Leftmost-longest matches as `(entry index, span)`.
    pub fn find_all(&self, text: &str) -> Vec<(usize, Span)> {
        let tokens = tokenize(text);
        let content = content_tokens(&tokens);
        let stems: Vec<String> = content.iter().map(|t| stem(&t.text)).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < content.len() {
            let mut best: Option<usize> = None;
            for &e in self.by_first.get(&stems[i]).into_iter().flatten() {
                let ps = &self.stems[e];
                let fits = i + ps.len() <= stems.len() && stems[i..i + ps.len()] == ps[..];
                if fits && best.map_or(true, |b| ps.len() > self.stems[b].len()) {
                    best = Some(e);
                }
            }
            match best {
                Some(e) => {
                    let len = self.stems[e].len();
                    out.push((e, Span::new(content[i].start, content[i + len - 1].end)));
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

fn parse_records<T: for<'de> Deserialize<'de>>(src: &str) -> Result<Vec<T>, AmbiguityError> {
    let trimmed = src.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| AmbiguityError::Lexicon(e.to_string()));
    }
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| serde_json::from_str(l).map_err(|e| AmbiguityError::Lexicon(e.to_string())))
        .collect()
}

/// Word lists for the syntactic and pragmatic detectors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerbLexicon {
    /// Verbs that start or complete a verb phrase.
    pub verbs: Vec<String>,
    /// Verbs that read or expose data without saying how.
    pub access_verbs: Vec<String>,
    /// Record-like objects whose delivery channel matters.
    pub data_nouns: Vec<String>,
    /// Words that state a channel or mechanism.
    pub qualifiers: Vec<String>,
    /// Modal and auxiliary verbs heading a passive or modal clause.
    pub auxiliaries: Vec<String>,
}

impl VerbLexicon {
    pub fn from_json(src: &str) -> Result<Self, AmbiguityError> {
        serde_json::from_str(src).map_err(|e| AmbiguityError::Lexicon(e.to_string()))
    }
}

#[derive(Debug, Clone, Default)]
struct VerbIndex {
    verbs: HashSet<String>,
    access: HashSet<String>,
    data_nouns: HashSet<String>,
    qualifiers: HashSet<String>,
    auxiliaries: HashSet<String>,
}

impl From<&VerbLexicon> for VerbIndex {
    fn from(v: &VerbLexicon) -> Self {
        let stems = |xs: &[String]| xs.iter().map(|x| stem(x)).collect();
        let lower = |xs: &[String]| xs.iter().map(|x| x.to_lowercase()).collect();
        Self {
            verbs: stems(&v.verbs),
            access: stems(&v.access_verbs),
            data_nouns: stems(&v.data_nouns),
            qualifiers: lower(&v.qualifiers),
            auxiliaries: lower(&v.auxiliaries),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Resolved,
    /// The same finding came back; the edit is kept.
    UnresolvedAfterEdit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveOutcome {
    pub resolution: Resolution,
    pub status: StoryStatus,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone)]
pub struct Detector {
    vague: VagueTermLexicon,
    lexicon: VerbLexicon,
    verbs: VerbIndex,
}

impl Detector {
    pub fn new(vague: VagueTermLexicon, verbs: VerbLexicon) -> Self {
        Self {
            vague,
            verbs: VerbIndex::from(&verbs),
            lexicon: verbs,
        }
    }

    pub fn vague_terms(&self) -> &VagueTermLexicon {
        &self.vague
    }

    pub fn verb_lexicon(&self) -> &VerbLexicon {
        &self.lexicon
    }

    /// Runs all detectors without touching story state. `what` may be absent,
    /// in which case only the lexical detector runs.
    pub fn scan(
        &self,
        story_id: &StoryId,
        revision: u64,
        raw: &str,
        what: Option<&ElementSpan>,
    ) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let next_id = |kind: DiagnosticKind, n: usize| {
            DiagnosticId(format!("{story_id}#{revision}:{}{n}", kind.code()))
        };
        for (n, (entry, span)) in self.vague.find_all(raw).into_iter().enumerate() {
            let term = &self.vague.entries[entry];
            let matched = text::char_slice(raw, span.start, span.end);
            let mut message = format!("vague term \"{matched}\": {}", term.note);
            if let Some(r) = &term.example_refinement {
                message.push_str(&format!(" (for example: {r})"));
            }
            out.push(Diagnostic::new(
                next_id(DiagnosticKind::Lexical, n),
                story_id.clone(),
                DiagnosticKind::Lexical,
                span,
                matched,
                message,
                None,
            ));
        }
        if let Some(what) = what {
            let tokens: Vec<Token> = tokenize(&what.text)
                .into_iter()
                .map(|mut t| {
                    t.start += what.start;
                    t.end += what.start;
                    t
                })
                .collect();
            for (n, span) in self.syntactic(&tokens).into_iter().enumerate() {
                let matched = text::char_slice(raw, span.start, span.end);
                out.push(Diagnostic::new(
                    next_id(DiagnosticKind::Syntactic, n),
                    story_id.clone(),
                    DiagnosticKind::Syntactic,
                    span,
                    matched.clone(),
                    format!(
                        "coordination \"{matched}\" joins a second verb phrase; state which actions apply to which data"
                    ),
                    None,
                ));
            }
            if let Some(head) = self.pragmatic(&tokens) {
                out.push(Diagnostic::new(
                    next_id(DiagnosticKind::Pragmatic, 0),
                    story_id.clone(),
                    DiagnosticKind::Pragmatic,
                    Span::new(head.start, head.end),
                    head.text.clone(),
                    format!(
                        "\"{}\" does not say how the data is accessed (export, download, in-app view, API); name the channel",
                        what.text
                    ),
                    None,
                ));
            }
        }
        out
    }

    fn syntactic(&self, tokens: &[Token]) -> Vec<Span> {
        let is_conj = |t: &Token| {
            t.kind == TokenKind::Word && (t.text.eq_ignore_ascii_case("and") || t.text.eq_ignore_ascii_case("or"))
        };
        let is_verb = |t: &Token| t.kind == TokenKind::Word && self.verbs.verbs.contains(&stem(&t.text));
        let is_aux = |t: &Token| self.verbs.auxiliaries.contains(&t.text.to_lowercase());
        let is_be = |t: &Token| matches!(t.text.to_lowercase().as_str(), "be" | "been" | "being");

        let mut out = Vec::new();
        for (j, conj) in tokens.iter().enumerate() {
            if !is_conj(conj) {
                continue;
            }
            let comma = j > 0 && tokens[j - 1].text == ",";
            if conj.text.eq_ignore_ascii_case("or") && !comma {
                continue;
            }
            let body: Vec<&Token> = tokens[j + 1..]
                .iter()
                .take_while(|t| t.text != "," && !is_conj(t))
                .collect();
            let Some(first) = body.iter().find(|t| t.is_wordlike()) else {
                continue;
            };
            let passive = body.iter().enumerate().any(|(k, t)| {
                is_aux(t)
                    && (body.get(k + 1).is_some_and(|n| is_verb(n))
                        || (body.get(k + 1).is_some_and(|n| is_be(n))
                            && body.get(k + 2).is_some_and(|n| is_verb(n))))
            });
            if is_verb(first) || passive {
                let start = if comma { tokens[j - 1].start } else { conj.start };
                let end = body.last().map_or(conj.end, |t| t.end);
                out.push(Span::new(start, end));
            }
        }
        out
    }

    fn pragmatic<'a>(&self, tokens: &'a [Token]) -> Option<&'a Token> {
        let content = content_tokens(tokens);
        let head = *content.first()?;
        if head.kind != TokenKind::Word || !self.verbs.access.contains(&stem(&head.text)) {
            return None;
        }
        let has_object = content[1..]
            .iter()
            .any(|t| self.verbs.data_nouns.contains(&stem(&t.text)));
        let qualified = content
            .iter()
            .any(|t| self.verbs.qualifiers.contains(&t.text.to_lowercase()));
        (has_object && !qualified).then_some(head)
    }

    /// Detects ambiguities in a `Normalized` story and moves it to
    /// `AmbiguitiesPending` or, with no findings, `Resolved`.
    pub fn detect(&self, story: &mut UserStory) -> Result<Vec<Diagnostic>, AmbiguityError> {
        if story.status() != StoryStatus::Normalized {
            return Err(AmbiguityError::WrongState {
                id: story.id.clone(),
                actual: story.status(),
                required: StoryStatus::Normalized,
            });
        }
        let diags = self.scan(&story.id, story.revision(), story.raw_text(), story.what());
        let next = if diags.iter().any(Diagnostic::is_open) {
            StoryStatus::AmbiguitiesPending
        } else {
            StoryStatus::Resolved
        };
        story.advance(next).expect("normalized story advances");
        Ok(diags)
    }

    /// Replaces the story text to address `diag_id`, then regenerates every
    /// finding. The target counts as resolved only if no finding with the
    /// same kind and matched text comes back.
    pub fn resolve(
        &self,
        story: &mut UserStory,
        diagnostics: &mut Vec<Diagnostic>,
        diag_id: &DiagnosticId,
        new_text: &str,
    ) -> Result<ResolveOutcome, AmbiguityError> {
        let target = diagnostics
            .iter()
            .find(|d| &d.id == diag_id && d.story_id == story.id)
            .cloned()
            .ok_or_else(|| AmbiguityError::UnknownDiagnostic(diag_id.clone()))?;
        if !target.is_open() {
            return Err(AmbiguityError::NotOpen(diag_id.clone()));
        }
        if story.status() != StoryStatus::AmbiguitiesPending {
            return Err(AmbiguityError::WrongState {
                id: story.id.clone(),
                actual: story.status(),
                required: StoryStatus::AmbiguitiesPending,
            });
        }
        let missing = crate::story::parse_story(story.id.clone(), new_text).missing;
        if !missing.is_empty() {
            return Err(AmbiguityError::IncompleteEdit(missing.into_iter().collect()));
        }
        story.replace_text(new_text);
        story
            .advance(StoryStatus::Normalized)
            .expect("complete text normalizes");
        let regenerated = self.detect(story)?;
        let persists = regenerated
            .iter()
            .any(|d| d.kind == target.kind && d.matched_text == target.matched_text);
        diagnostics.clear();
        if !persists {
            let mut done = target;
            done.state = DiagnosticState::Resolved;
            diagnostics.push(done);
        }
        diagnostics.extend(regenerated);
        Ok(ResolveOutcome {
            resolution: if persists {
                Resolution::UnresolvedAfterEdit
            } else {
                Resolution::Resolved
            },
            status: story.status(),
            diagnostics: diagnostics.clone(),
        })
    }
}

/// Accepts an open finding with a justification. When nothing stays open the
/// story moves to `Resolved`.
pub fn waive(
    story: &mut UserStory,
    diagnostics: &mut [Diagnostic],
    diag_id: &DiagnosticId,
    note: &str,
) -> Result<Diagnostic, AmbiguityError> {
    if note.trim().is_empty() {
        return Err(AmbiguityError::EmptyNote);
    }
    let diag = diagnostics
        .iter_mut()
        .find(|d| &d.id == diag_id && d.story_id == story.id)
        .ok_or_else(|| AmbiguityError::UnknownDiagnostic(diag_id.clone()))?;
    if !diag.is_open() {
        return Err(AmbiguityError::NotOpen(diag_id.clone()));
    }
    diag.state = DiagnosticState::Waived;
    diag.waive_note = Some(note.trim().to_string());
    let waived = diag.clone();
    if story.status() == StoryStatus::AmbiguitiesPending && gate_passes(diagnostics) {
        story
            .advance(StoryStatus::Resolved)
            .expect("pending story resolves");
    }
    Ok(waived)
}

/// True when no finding is still open.
pub fn gate_passes(diagnostics: &[Diagnostic]) -> bool {
    !diagnostics.iter().any(Diagnostic::is_open)
}
