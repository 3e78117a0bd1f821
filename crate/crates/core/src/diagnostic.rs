//! Span-anchored findings attached to a story.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::story::{Element, StoryId};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiagnosticId(pub String);

impl fmt::Display for DiagnosticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DiagnosticId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// `Semantic` is part of the model but no built-in detector emits it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosticKind {
    Lexical,
    Syntactic,
    Pragmatic,
    Semantic,
    FormatViolation,
}

impl DiagnosticKind {
    pub fn code(self) -> &'static str {
        match self {
            DiagnosticKind::Lexical => "L",
            DiagnosticKind::Syntactic => "S",
            DiagnosticKind::Pragmatic => "P",
            DiagnosticKind::Semantic => "M",
            DiagnosticKind::FormatViolation => "F",
        }
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticState {
    Open,
    Resolved,
    Waived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub id: DiagnosticId,
    pub story_id: StoryId,
    pub kind: DiagnosticKind,
    pub span: Span,
    pub matched_text: String,
    pub message: String,
    pub state: DiagnosticState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waive_note: Option<String>,
    /// Set on format findings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<Element>,
}

impl Diagnostic {
    pub fn new(
        id: DiagnosticId,
        story_id: StoryId,
        kind: DiagnosticKind,
        span: Span,
        matched_text: String,
        message: String,
        element: Option<Element>,
    ) -> Self {
        Self {
            id,
            story_id,
            kind,
            span,
            matched_text,
            message,
            state: DiagnosticState::Open,
            waive_note: None,
            element,
        }
    }

    pub fn is_open(&self) -> bool {
        self.state == DiagnosticState::Open
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: {}",
            self.span, self.kind, self.story_id, self.message
        )
    }
}
