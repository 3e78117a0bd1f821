//! In-memory GDPR knowledge graph: entities, typed triples, mapping rules and
//! pattern queries, plus the story-to-article mapper.
//!
//! The graph is immutable once built. A new file version means a new graph.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::story::{Element, ElementSpan, StoryId, StoryStatus, UserStory};
use crate::text::{content_tokens, stem, tokenize, Token};

/// Canonical GDPR reference: `Art.17`, `Art.4(1)` or `Art.5(1)(b)`.
///
/// Article and paragraph numbers are 1 to 3 digits without a leading zero;
/// the point is one lowercase ASCII letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArticleId {
    pub article: u16,
    pub paragraph: Option<u16>,
    pub point: Option<char>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a canonical article id: {0:?}")]
pub struct BadArticleId(pub String);

fn parse_number(s: &str) -> Option<(u16, &str)> {
    let len = s.bytes().take_while(u8::is_ascii_digit).count();
    if len == 0 || len > 3 || s.starts_with('0') {
        return None;
    }
    Some((s[..len].parse().ok()?, &s[len..]))
}

impl FromStr for ArticleId {
    type Err = BadArticleId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadArticleId(s.to_string());
        let rest = s.strip_prefix("Art.").ok_or_else(bad)?;
        let (article, mut rest) = parse_number(rest).ok_or_else(bad)?;
        let mut id = ArticleId {
            article,
            paragraph: None,
            point: None,
        };
        if let Some(r) = rest.strip_prefix('(') {
            let (p, r) = parse_number(r).ok_or_else(bad)?;
            id.paragraph = Some(p);
            rest = r.strip_prefix(')').ok_or_else(bad)?;
            if let Some(r) = rest.strip_prefix('(') {
                let mut chars = r.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), Some(')')) if c.is_ascii_lowercase() => id.point = Some(c),
                    _ => return Err(bad()),
                }
                rest = chars.as_str();
            }
        }
        if rest.is_empty() {
            Ok(id)
        } else {
            Err(bad())
        }
    }
}

impl fmt::Display for ArticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Art.{}", self.article)?;
        if let Some(p) = self.paragraph {
            write!(f, "({p})")?;
        }
        if let Some(l) = self.point {
            write!(f, "({l})")?;
        }
        Ok(())
    }
}

impl Serialize for ArticleId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ArticleId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl ArticleId {
    pub fn parent(&self) -> Option<ArticleId> {
        if self.point.is_some() {
            Some(ArticleId { point: None, ..*self })
        } else if self.paragraph.is_some() {
            Some(ArticleId {
                paragraph: None,
                ..*self
            })
        } else {
            None
        }
    }

    /// Strict ancestors, nearest first.
    pub fn ancestors(&self) -> Vec<ArticleId> {
        std::iter::successors(self.parent(), ArticleId::parent).collect()
    }

    /// True when `self` equals `other` or is a sub-part of it.
    pub fn is_within(&self, other: &ArticleId) -> bool {
        self == other || self.ancestors().contains(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Action,
    DataEntity,
    Concept,
    Article,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: String,
}

impl EntityRef {
    pub fn new(kind: EntityKind, id: impl Into<String>) -> Self {
        Self { kind, id: id.into() }
    }

    pub fn article(id: ArticleId) -> Self {
        Self::new(EntityKind::Article, id.to_string())
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Lowercase snake-case: `delete_account`, `personal_data`, `art4`.
pub fn is_snake_id(s: &str) -> bool {
    let mut prev_underscore = true;
    for (i, c) in s.chars().enumerate() {
        match c {
            'a'..='z' => prev_underscore = false,
            '0'..='9' if i > 0 => prev_underscore = false,
            '_' if !prev_underscore => prev_underscore = true,
            _ => return false,
        }
    }
    !s.is_empty() && !prev_underscore
}

/// Variants are declared in name order so the derived `Ord` sorts by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    DefinedIn,
    DescribedIn,
    Is,
    IsAbout,
    Performs,
    RequiresCompliance,
}

impl Predicate {
    pub const ALL: [Predicate; 6] = [
        Predicate::DefinedIn,
        Predicate::DescribedIn,
        Predicate::Is,
        Predicate::IsAbout,
        Predicate::Performs,
        Predicate::RequiresCompliance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::DefinedIn => "defined_in",
            Predicate::DescribedIn => "described_in",
            Predicate::Is => "is",
            Predicate::IsAbout => "is_about",
            Predicate::Performs => "performs",
            Predicate::RequiresCompliance => "requires_compliance",
        }
    }

    fn check(self, subject: &EntityRef, object: &EntityRef) -> Result<(), String> {
        let object_article = matches!(
            self,
            Predicate::RequiresCompliance | Predicate::DefinedIn | Predicate::DescribedIn
        );
        if object_article && object.kind != EntityKind::Article {
            return Err(format!("{} needs an article object, got {}", self.name(), object.id));
        }
        if self == Predicate::IsAbout && subject.kind != EntityKind::Article {
            return Err(format!("is_about needs an article subject, got {}", subject.id));
        }
        Ok(())
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Predicate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Predicate::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown predicate {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityRef,
    pub predicate: Predicate,
    pub object: EntityRef,
}

impl Triple {
    fn sort_key(&self) -> (&str, &str, &str) {
        (&self.subject.id, self.predicate.name(), &self.object.id)
    }
}

impl PartialOrd for Triple {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Triple {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key()
            .cmp(&other.sort_key())
            .then_with(|| self.subject.kind.cmp(&other.subject.kind))
            .then_with(|| self.object.kind.cmp(&other.object.kind))
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleInfo {
    pub title: String,
    pub summary: String,
    /// Imperative clauses; may contain `{data_entity}`, `{action}`, `{actor}`.
    pub obligations: Vec<String>,
    pub rationale: String,
    /// Noun phrase completing "This user story involves ...".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDecl {
    pub id: String,
    pub kind: EntityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<ArticleInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRule {
    pub id: String,
    pub element: Element,
    /// Phrases compared stem by stem, ignoring determiners.
    #[serde(rename = "match")]
    pub phrases: Vec<String>,
    /// Action or data entity the trigger stands for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    pub articles: Vec<ArticleId>,
    #[serde(default)]
    pub note: String,
}

/// On-disk layout of a knowledge-graph file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgFile {
    pub kg_version: String,
    #[serde(default)]
    pub entities: Vec<EntityDecl>,
    /// `[subject id, predicate, object id]`.
    #[serde(default)]
    pub triples: Vec<(String, String, String)>,
    #[serde(default)]
    pub rules: Vec<MappingRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KgError {
    #[error("cannot parse knowledge graph: {0}")]
    Parse(String),
    #[error("schema violation: {0}")]
    SchemaError(String),
    #[error("undeclared entity {0:?}")]
    DanglingRef(String),
    #[error("entity {0:?} declared twice")]
    DuplicateEntity(String),
    #[error("pattern must bind at least one slot")]
    UnboundPattern,
    #[error("story {id} is {actual}, expected Resolved")]
    WrongState { id: StoryId, actual: StoryStatus },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriplePattern {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<EntityRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<EntityRef>,
}

impl TriplePattern {
    pub fn matches(&self, t: &Triple) -> bool {
        self.subject.as_ref().map_or(true, |s| *s == t.subject)
            && self.predicate.map_or(true, |p| p == t.predicate)
            && self.object.as_ref().map_or(true, |o| *o == t.object)
    }

    pub fn is_unbound(&self) -> bool {
        self.subject.is_none() && self.predicate.is_none() && self.object.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    version: String,
    entities: HashMap<String, EntityRef>,
    articles: HashMap<ArticleId, ArticleInfo>,
    /// Sorted and de-duplicated.
    triples: Vec<Triple>,
    by_subject: HashMap<EntityRef, Vec<usize>>,
    by_predicate: HashMap<Predicate, Vec<usize>>,
    by_object: HashMap<EntityRef, Vec<usize>>,
    rules: Vec<MappingRule>,
}

impl KnowledgeGraph {
    pub fn load(src: &str) -> Result<Self, KgError> {
        let file: KgFile = serde_json::from_str(src).map_err(|e| KgError::Parse(e.to_string()))?;
        Self::build(file)
    }

    pub fn build(file: KgFile) -> Result<Self, KgError> {
        let mut entities = HashMap::new();
        let mut articles = HashMap::new();
        for decl in file.entities {
            let well_formed = match decl.kind {
                EntityKind::Article => decl.id.parse::<ArticleId>().is_ok(),
                _ => is_snake_id(&decl.id),
            };
            if !well_formed {
                return Err(KgError::SchemaError(format!(
                    "entity id {:?} is not valid for kind {:?}",
                    decl.id, decl.kind
                )));
            }
            if decl.kind == EntityKind::Article {
                let info = decl.info.clone().ok_or_else(|| {
                    KgError::SchemaError(format!("article {} has no info", decl.id))
                })?;
                if info.title.trim().is_empty() || info.summary.trim().is_empty() || info.obligations.is_empty() {
                    return Err(KgError::SchemaError(format!(
                        "article {} needs a title, summary and obligations",
                        decl.id
                    )));
                }
                articles.insert(decl.id.parse().expect("checked above"), info);
            }
            let r = EntityRef::new(decl.kind, decl.id.clone());
            if entities.insert(decl.id.clone(), r).is_some() {
                return Err(KgError::DuplicateEntity(decl.id));
            }
        }
        let lookup = |id: &str| entities.get(id).cloned().ok_or_else(|| KgError::DanglingRef(id.to_string()));

        let mut triples = Vec::with_capacity(file.triples.len());
        for (s, p, o) in &file.triples {
            let predicate: Predicate = p.parse().map_err(KgError::SchemaError)?;
            let subject = lookup(s)?;
            let object = lookup(o)?;
            predicate.check(&subject, &object).map_err(KgError::SchemaError)?;
            triples.push(Triple {
                subject,
                predicate,
                object,
            });
        }
        triples.sort();
        triples.dedup();

        for rule in &file.rules {
            if rule.articles.is_empty() || rule.phrases.iter().all(|p| p.trim().is_empty()) {
                return Err(KgError::SchemaError(format!("rule {} needs phrases and articles", rule.id)));
            }
            if !matches!(rule.element, Element::What | Element::Who) {
                return Err(KgError::SchemaError(format!("rule {} must target what or who", rule.id)));
            }
            for a in &rule.articles {
                if !articles.contains_key(a) {
                    return Err(KgError::DanglingRef(a.to_string()));
                }
            }
            if let Some(e) = &rule.entity {
                lookup(e)?;
            }
        }

        let mut by_subject: HashMap<EntityRef, Vec<usize>> = HashMap::new();
        let mut by_predicate: HashMap<Predicate, Vec<usize>> = HashMap::new();
        let mut by_object: HashMap<EntityRef, Vec<usize>> = HashMap::new();
        for (i, t) in triples.iter().enumerate() {
            by_subject.entry(t.subject.clone()).or_default().push(i);
            by_predicate.entry(t.predicate).or_default().push(i);
            by_object.entry(t.object.clone()).or_default().push(i);
        }
        Ok(Self {
            version: file.kg_version,
            entities,
            articles,
            triples,
            by_subject,
            by_predicate,
            by_object,
            rules: file.rules,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn rules(&self) -> &[MappingRule] {
        &self.rules
    }

    pub fn entity(&self, id: &str) -> Option<&EntityRef> {
        self.entities.get(id)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn article(&self, id: &ArticleId) -> Option<&ArticleInfo> {
        self.articles.get(id)
    }

    pub fn article_ids(&self) -> BTreeSet<ArticleId> {
        self.articles.keys().copied().collect()
    }

    /// All triples matching every bound slot, in (subject id, predicate,
    /// object id) order.
    pub fn query(&self, pattern: &TriplePattern) -> Result<Vec<Triple>, KgError> {
        if pattern.is_unbound() {
            return Err(KgError::UnboundPattern);
        }
        let empty = Vec::new();
        let mut candidates: Vec<&Vec<usize>> = Vec::new();
        if let Some(s) = &pattern.subject {
            candidates.push(self.by_subject.get(s).unwrap_or(&empty));
        }
        if let Some(p) = &pattern.predicate {
            candidates.push(self.by_predicate.get(p).unwrap_or(&empty));
        }
        if let Some(o) = &pattern.object {
            candidates.push(self.by_object.get(o).unwrap_or(&empty));
        }
        let smallest = candidates.into_iter().min_by_key(|c| c.len()).expect("one slot bound");
        Ok(smallest
            .iter()
            .map(|&i| &self.triples[i])
            .filter(|t| pattern.matches(t))
            .cloned()
            .collect())
    }

    /// Parses `"subject predicate object"` with `?` for an open slot.
    pub fn parse_pattern(&self, text: &str) -> Result<TriplePattern, KgError> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        let [s, p, o] = parts[..] else {
            return Err(KgError::Parse(format!("expected three slots, got {text:?}")));
        };
        let entity = |x: &str| -> Result<Option<EntityRef>, KgError> {
            if x == "?" {
                Ok(None)
            } else {
                self.entity(x).cloned().map(Some).ok_or_else(|| KgError::DanglingRef(x.into()))
            }
        };
        let predicate = if p == "?" {
            None
        } else {
            Some(p.parse().map_err(KgError::Parse)?)
        };
        Ok(TriplePattern {
            subject: entity(s)?,
            predicate,
            object: entity(o)?,
        })
    }

    /// Triples reachable from `roots` along at most two outgoing edges.
    pub fn neighborhood(&self, roots: &[EntityRef]) -> Vec<Triple> {
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut frontier: Vec<EntityRef> = roots.to_vec();
        for _ in 0..2 {
            let mut next = Vec::new();
            for e in &frontier {
                for &i in self.by_subject.get(e).into_iter().flatten() {
                    if seen.insert(i) {
                        next.push(self.triples[i].object.clone());
                    }
                }
            }
            frontier = next;
        }
        seen.into_iter().map(|i| self.triples[i].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub rule: String,
    pub element: Element,
    pub start: usize,
    pub end: usize,
    pub matched_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<EntityRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryMapping {
    pub story_id: StoryId,
    pub story_revision: u64,
    pub kg_version: String,
    pub articles: Vec<ArticleId>,
    pub evidence: Vec<Evidence>,
    pub triples: Vec<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
}

impl StoryMapping {
    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "my", "your", "our", "their", "his", "her", "its", "this", "that", "these", "those", "some",
    "any", "all", "each", "every",
];

fn is_determiner(t: &Token) -> bool {
    DETERMINERS.iter().any(|d| t.text.eq_ignore_ascii_case(d))
}

/// Stemmed, determiner-free tokens of `element`, with story offsets.
fn match_tokens(element: &ElementSpan) -> Vec<(String, Token)> {
    let toks = tokenize(&element.text);
    content_tokens(&toks)
        .into_iter()
        .filter(|t| !is_determiner(t))
        .map(|t| {
            let mut t = t.clone();
            t.start += element.start;
            t.end += element.start;
            (stem(&t.text), t)
        })
        .collect()
}

fn phrase_stems(phrase: &str) -> Vec<String> {
    let toks = tokenize(phrase);
    content_tokens(&toks)
        .into_iter()
        .filter(|t| !is_determiner(t))
        .map(|t| stem(&t.text))
        .collect()
}

/// Leftmost match of any phrase; the longer phrase wins at the same offset.
fn first_match(tokens: &[(String, Token)], phrases: &[String]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for phrase in phrases {
        let ps = phrase_stems(phrase);
        if ps.is_empty() || ps.len() > tokens.len() {
            continue;
        }
        let hit = (0..=tokens.len() - ps.len())
            .find(|&i| tokens[i..i + ps.len()].iter().zip(&ps).all(|((s, _), p)| s == p));
        if let Some(i) = hit {
            let better = match best {
                None => true,
                Some((bi, bl)) => i < bi || (i == bi && ps.len() > bl),
            };
            if better {
                best = Some((i, ps.len()));
            }
        }
    }
    best
}

/// Maps a `Resolved` story to articles using `rules` against `kg`.
///
/// Articles are ordered by the offset of their first evidence, ties broken by
/// rule order then article order within the rule.
pub fn map_story(story: &UserStory, rules: &[MappingRule], kg: &KnowledgeGraph) -> Result<StoryMapping, KgError> {
    if story.status() != StoryStatus::Resolved {
        return Err(KgError::WrongState {
            id: story.id.clone(),
            actual: story.status(),
        });
    }
    let mut evidence = Vec::new();
    let mut keyed: Vec<(usize, usize, usize, ArticleId)> = Vec::new();
    let mut cache: HashMap<Element, Vec<(String, Token)>> = HashMap::new();
    for (ri, rule) in rules.iter().enumerate() {
        let Some(span) = story.element(rule.element) else {
            continue;
        };
        let tokens = cache.entry(rule.element).or_insert_with(|| match_tokens(span));
        let Some((i, len)) = first_match(tokens, &rule.phrases) else {
            continue;
        };
        let start = tokens[i].1.start;
        let end = tokens[i + len - 1].1.end;
        let rel_start = start - span.start;
        let rel_end = end - span.start;
        evidence.push(Evidence {
            rule: rule.id.clone(),
            element: rule.element,
            start,
            end,
            matched_text: crate::text::char_slice(&span.text, rel_start, rel_end),
            entity: rule.entity.as_deref().and_then(|e| kg.entity(e)).cloned(),
        });
        for (ai, a) in rule.articles.iter().enumerate() {
            keyed.push((start, ri, ai, *a));
        }
    }
    keyed.sort();
    let mut seen = HashSet::new();
    let articles: Vec<ArticleId> = keyed.into_iter().map(|k| k.3).filter(|a| seen.insert(*a)).collect();
    evidence.sort_by_key(|e| e.start);
    let roots: Vec<EntityRef> = evidence
        .iter()
        .filter_map(|e| e.entity.clone())
        .filter(|e| matches!(e.kind, EntityKind::Action | EntityKind::DataEntity))
        .collect();
    Ok(StoryMapping {
        story_id: story.id.clone(),
        story_revision: story.revision(),
        kg_version: kg.version().to_string(),
        articles,
        evidence,
        triples: kg.neighborhood(&roots),
        actor: story.who().map(|w| w.text.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::story::parse_story;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use regex::Regex;

    fn info(title: &str) -> ArticleInfo {
        ArticleInfo {
            title: title.into(),
            summary: "summary".into(),
            obligations: vec!["Handle {data_entity} lawfully.".into()],
            rationale: "because".into(),
            context: None,
        }
    }

    fn decl(id: &str, kind: EntityKind) -> EntityDecl {
        EntityDecl {
            id: id.into(),
            kind,
            info: (kind == EntityKind::Article).then(|| info(id)),
        }
    }

    fn t(s: &str, p: &str, o: &str) -> (String, String, String) {
        (s.into(), p.into(), o.into())
    }

    fn erasure_kg() -> KnowledgeGraph {
        KnowledgeGraph::build(KgFile {
            kg_version: "t1".into(),
            entities: vec![
                decl("user", EntityKind::Concept),
                decl("delete_account", EntityKind::Action),
                decl("Art.17", EntityKind::Article),
                decl("right_to_erasure", EntityKind::Concept),
            ],
            triples: vec![
                t("user", "performs", "delete_account"),
                t("delete_account", "requires_compliance", "Art.17"),
                t("Art.17", "is_about", "right_to_erasure"),
            ],
            rules: vec![],
        })
        .unwrap()
    }

    #[test]
    fn article_grammar() {
        for ok in ["Art.17", "Art.4(1)", "Art.5(1)(b)", "Art.99(12)(z)"] {
            let id: ArticleId = ok.parse().unwrap();
            assert_eq!(id.to_string(), ok);
        }
        for bad in ["Art.0", "Art.05", "Art.5(1)(B)", "Art.5()", "Art 5", "Art.5(1)(bb)", "Art.5(b)", "art.5", "Art.5 "] {
            assert!(bad.parse::<ArticleId>().is_err(), "{bad}");
        }
        let c: ArticleId = "Art.5(1)(c)".parse().unwrap();
        assert_eq!(c.ancestors(), vec!["Art.5(1)".parse().unwrap(), "Art.5".parse().unwrap()]);
        assert!(c.is_within(&"Art.5".parse().unwrap()));
        assert!(!"Art.5".parse::<ArticleId>().unwrap().is_within(&c));
    }

    #[test]
    fn three_triple_graph() {
        let kg = erasure_kg();
        assert_eq!(kg.triples().len(), 3);
        assert_eq!(kg.entity_count(), 4);
        let pat = kg.parse_pattern("delete_account requires_compliance ?").unwrap();
        let hits = kg.query(&pat).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].object.id, "Art.17");
    }

    #[test]
    fn empty_graph_answers_nothing() {
        let kg = KnowledgeGraph::build(KgFile::default()).unwrap();
        let pat = TriplePattern {
            predicate: Some(Predicate::Is),
            ..Default::default()
        };
        assert!(kg.query(&pat).unwrap().is_empty());
        assert_eq!(kg.query(&TriplePattern::default()), Err(KgError::UnboundPattern));
    }

    #[test]
    fn schema_violations() {
        let mut f = KgFile {
            kg_version: "x".into(),
            entities: vec![decl("delete_account", EntityKind::Action), decl("Art.17", EntityKind::Article)],
            triples: vec![t("Art.17", "requires_compliance", "delete_account")],
            rules: vec![],
        };
        assert!(matches!(KnowledgeGraph::build(f.clone()), Err(KgError::SchemaError(_))));
        f.triples = vec![t("delete_account", "is_about", "Art.17")];
        assert!(matches!(KnowledgeGraph::build(f.clone()), Err(KgError::SchemaError(_))));
        f.triples = vec![t("delete_account", "requires_compliance", "Art.18")];
        assert!(matches!(KnowledgeGraph::build(f.clone()), Err(KgError::DanglingRef(_))));
        f.triples.clear();
        f.entities.push(decl("Delete-Account", EntityKind::Action));
        assert!(matches!(KnowledgeGraph::build(f), Err(KgError::SchemaError(_))));
    }

    #[test]
    fn snake_ids() {
        for ok in ["user", "delete_account", "art4_1", "a1"] {
            assert!(is_snake_id(ok), "{ok}");
        }
        for bad in ["", "_x", "x_", "a__b", "Delete", "1x", "a-b"] {
            assert!(!is_snake_id(bad), "{bad}");
        }
    }

    fn rule(id: &str, phrases: &[&str], entity: Option<&str>, articles: &[&str]) -> MappingRule {
        MappingRule {
            id: id.into(),
            element: Element::What,
            phrases: phrases.iter().map(|s| s.to_string()).collect(),
            entity: entity.map(String::from),
            articles: articles.iter().map(|a| a.parse().unwrap()).collect(),
            note: String::new(),
        }
    }

    fn resolved(text: &str) -> UserStory {
        let mut s = parse_story("s", text).story;
        s.advance(StoryStatus::Resolved).unwrap();
        s
    }

    #[test]
    fn delete_account_maps_to_erasure() {
        let kg = erasure_kg();
        let rules = vec![rule("erase", &["delete account"], Some("delete_account"), &["Art.17"])];
        let s = resolved("As a user, I want to delete my account so that my data is removed.");
        let m = map_story(&s, &rules, &kg).unwrap();
        assert_eq!(m.articles, vec!["Art.17".parse().unwrap()]);
        assert_eq!(m.evidence[0].matched_text, "delete my account");
        assert_eq!(m.triples.len(), 2);
        assert_eq!(m.actor.as_deref(), Some("user"));
    }

    #[test]
    fn map_requires_resolved() {
        let kg = erasure_kg();
        let s = parse_story("s", "As a user, I want to delete my account so that my data is removed.").story;
        assert!(matches!(map_story(&s, &[], &kg), Err(KgError::WrongState { .. })));
    }

    #[test]
    fn evidence_order_decides_article_order() {
        let kg = KnowledgeGraph::build(KgFile {
            kg_version: "t".into(),
            entities: ["Art.6", "Art.17", "Art.25"].iter().map(|a| decl(a, EntityKind::Article)).collect(),
            ..Default::default()
        })
        .unwrap();
        let rules = vec![
            rule("later", &["history"], None, &["Art.25", "Art.17"]),
            rule("earlier", &["exports"], None, &["Art.6", "Art.17"]),
        ];
        let s = resolved("As a user, I want to export my order history so that I can file taxes.");
        let m = map_story(&s, &rules, &kg).unwrap();
        let got: Vec<String> = m.articles.iter().map(|a| a.to_string()).collect();
        assert_eq!(got, ["Art.6", "Art.17", "Art.25"]);
    }

    /// Brute-force reference: scan every triple.
    fn oracle(triples: &[Triple], p: &TriplePattern) -> Vec<Triple> {
        let mut out: Vec<Triple> = triples.iter().filter(|t| p.matches(t)).cloned().collect();
        out.sort_by(|a, b| {
            (&a.subject.id, a.predicate.name(), &a.object.id).cmp(&(&b.subject.id, b.predicate.name(), &b.object.id))
        });
        out.dedup();
        out
    }

    fn random_kg(rng: &mut ChaCha8Rng) -> (KnowledgeGraph, Vec<Triple>, Vec<EntityRef>) {
        let n_plain = rng.gen_range(1..12);
        let n_art = rng.gen_range(1..6);
        let mut decls: Vec<EntityDecl> = (0..n_plain)
            .map(|i| {
                let kind = [EntityKind::Action, EntityKind::DataEntity, EntityKind::Concept][i % 3];
                decl(&format!("e{i}"), kind)
            })
            .collect();
        decls.extend((1..=n_art).map(|i| decl(&format!("Art.{i}"), EntityKind::Article)));
        let refs: Vec<EntityRef> = decls.iter().map(|d| EntityRef::new(d.kind, d.id.clone())).collect();
        let mut raw = Vec::new();
        let mut triples = Vec::new();
        let n = rng.gen_range(0..=200);
        while raw.len() < n {
            let s = &refs[rng.gen_range(0..refs.len())];
            let o = &refs[rng.gen_range(0..refs.len())];
            let p = Predicate::ALL[rng.gen_range(0..6)];
            if p.check(s, o).is_ok() {
                raw.push((s.id.clone(), p.name().to_string(), o.id.clone()));
                triples.push(Triple {
                    subject: s.clone(),
                    predicate: p,
                    object: o.clone(),
                });
            }
        }
        let kg = KnowledgeGraph::build(KgFile {
            kg_version: "r".into(),
            entities: decls,
            triples: raw,
            rules: vec![],
        })
        .unwrap();
        (kg, triples, refs)
    }

    #[test]
    fn query_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let (kg, triples, refs) = random_kg(&mut rng);
            for _ in 0..4 {
                let mut p = TriplePattern::default();
                while p.is_unbound() {
                    if rng.gen_bool(0.5) {
                        p.subject = Some(refs[rng.gen_range(0..refs.len())].clone());
                    }
                    if rng.gen_bool(0.5) {
                        p.predicate = Some(Predicate::ALL[rng.gen_range(0..6)]);
                    }
                    if rng.gen_bool(0.5) {
                        p.object = Some(refs[rng.gen_range(0..refs.len())].clone());
                    }
                }
                assert_eq!(kg.query(&p).unwrap(), oracle(&triples, &p));
            }
        }
    }

    #[test]
    fn every_triple_reachable_through_each_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (kg, _, _) = random_kg(&mut rng);
            for t in kg.triples() {
                for p in [
                    TriplePattern { subject: Some(t.subject.clone()), ..Default::default() },
                    TriplePattern { predicate: Some(t.predicate), ..Default::default() },
                    TriplePattern { object: Some(t.object.clone()), ..Default::default() },
                ] {
                    assert!(kg.query(&p).unwrap().contains(t));
                }
            }
        }
    }

    fn article_candidate() -> impl Strategy<Value = String> {
        prop_oneof![
            "Art\\.[0-9]{1,4}",
            "Art\\.[0-9]{1,4}\\([0-9]{0,4}\\)",
            "Art\\.[0-9]{1,4}\\([0-9]{1,4}\\)\\([a-zA-Z0-9]{0,2}\\)",
            "[A-Za-z.()0-9 ]{0,12}",
        ]
    }

    proptest! {
        #[test]
        fn parser_agrees_with_regex(s in article_candidate()) {
            let re = Regex::new(r"^Art\.[1-9][0-9]{0,2}(\([1-9][0-9]{0,2}\)(\([a-z]\))?)?$").unwrap();
            prop_assert_eq!(s.parse::<ArticleId>().is_ok(), re.is_match(&s));
            if let Ok(id) = s.parse::<ArticleId>() {
                prop_assert_eq!(id.to_string(), s);
            }
        }

        #[test]
        fn adding_a_rule_never_drops_articles(extra in prop::sample::select(vec!["order", "history", "taxes", "profile", "export", "file"])) {
            let kg = KnowledgeGraph::build(KgFile {
                kg_version: "t".into(),
                entities: ["Art.6", "Art.17", "Art.25"].iter().map(|a| decl(a, EntityKind::Article)).collect(),
                ..Default::default()
            }).unwrap();
            let base = vec![rule("a", &["history"], None, &["Art.25"])];
            let mut more = base.clone();
            more.insert(0, rule("b", &[extra], None, &["Art.6", "Art.17"]));
            let s = resolved("As a user, I want to export my order history so that I can file taxes.");
            let before = map_story(&s, &base, &kg).unwrap().articles;
            let after = map_story(&s, &more, &kg).unwrap().articles;
            for a in before {
                prop_assert!(after.contains(&a));
            }
        }
    }
}
