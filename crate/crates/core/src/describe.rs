//! Compliance descriptions composed from knowledge-graph templates.
//!
//! Each mapped article yields one section of tagged segments: `How` clauses
//! taken from the article's obligations, one `Why` clause from its rationale
//! and a `Source` naming the article. `Plain` segments carry the glue text.

use serde::{Deserialize, Serialize};

use crate::kg::{ArticleId, EntityKind, KnowledgeGraph, StoryMapping};
use crate::normalize::CorrectionService;
use crate::story::{StoryId, StoryStatus, UserStory};

pub const NONE_REQUIRED: &str = "No GDPR privacy requirement identified for this story.";
pub const GENERIC_ENTITY: &str = "the personal data";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DescribeError {
    #[error("story {id} is {actual}, expected Resolved")]
    WrongState { id: StoryId, actual: StoryStatus },
    #[error("mapping built against knowledge graph {mapping}, loaded graph is {loaded}")]
    VersionMismatch { mapping: String, loaded: String },
    #[error("mapping is for {mapping_story} revision {mapping_revision}, story is {story} revision {revision}")]
    StaleMapping {
        mapping_story: StoryId,
        mapping_revision: u64,
        story: StoryId,
        revision: u64,
    },
    #[error("article {0} is not in the knowledge graph")]
    UnknownArticle(ArticleId),
    #[error("invalid annotated description: {0}")]
    BadAnnotation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    How,
    Why,
    Source,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub tag: Tag,
}

impl Segment {
    fn new(tag: Tag, text: impl Into<String>) -> Self {
        Self { text: text.into(), tag }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleSection {
    pub article: ArticleId,
    pub how: Vec<String>,
    pub why: String,
    pub source: String,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceDescription {
    pub story_id: StoryId,
    pub kg_version: String,
    pub sections: Vec<ArticleSection>,
    pub none_required: bool,
    /// Information-level remarks, e.g. placeholders left unfilled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    PlainText,
    AnnotatedJson,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "plain" | "plaintext" => Ok(Format::PlainText),
            "json" | "annotated" | "annotatedjson" => Ok(Format::AnnotatedJson),
            "md" | "markdown" => Ok(Format::Markdown),
            _ => Err(format!("unknown format {s:?}")),
        }
    }
}

/// Substitutes `{data_entity}`, `{action}` and `{actor}`.
struct Fillers {
    data_entity: Option<String>,
    action: Option<String>,
    actor: Option<String>,
}

impl Fillers {
    fn fill(&self, template: &str, article: &ArticleId, notices: &mut Vec<String>) -> String {
        let mut out = template.to_string();
        for (key, value) in [
            ("{data_entity}", &self.data_entity),
            ("{action}", &self.action),
            ("{actor}", &self.actor),
        ] {
            if !out.contains(key) {
                continue;
            }
            match value {
                Some(v) => out = out.replace(key, v),
                None => {
                    notices.push(format!("{article}: no story entity for {key}, using \"{GENERIC_ENTITY}\""));
                    // The generic phrase brings its own article.
                    out = out.replace(&format!("the {key}"), GENERIC_ENTITY).replace(key, GENERIC_ENTITY);
                }
            }
        }
        out
    }
}

fn fillers_for(mapping: &StoryMapping, kg: &KnowledgeGraph, article: &ArticleId) -> Fillers {
    // Prefer evidence from rules that cite this article.
    let cites = |rule: &str| {
        kg.rules()
            .iter()
            .any(|r| r.id == rule && r.articles.contains(article))
    };
    let pick = |kind: EntityKind| {
        let of_kind = |e: &&crate::kg::Evidence| e.entity.as_ref().is_some_and(|x| x.kind == kind);
        mapping
            .evidence
            .iter()
            .filter(of_kind)
            .find(|e| cites(&e.rule))
            .or_else(|| mapping.evidence.iter().find(of_kind))
            .map(|e| e.matched_text.clone())
    };
    Fillers {
        data_entity: pick(EntityKind::DataEntity),
        action: pick(EntityKind::Action),
        actor: mapping.actor.clone(),
    }
}

fn entity_list(mapping: &StoryMapping) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for e in &mapping.evidence {
        if !out.iter().any(|x| x.eq_ignore_ascii_case(&e.matched_text)) {
            out.push(e.matched_text.clone());
        }
    }
    out
}

/// Builds the description for `mapping`. Pure: the same inputs always give
/// the same output.
pub fn compose(mapping: &StoryMapping, kg: &KnowledgeGraph) -> Result<ComplianceDescription, DescribeError> {
    if mapping.kg_version != kg.version() {
        return Err(DescribeError::VersionMismatch {
            mapping: mapping.kg_version.clone(),
            loaded: kg.version().to_string(),
        });
    }
    let entities = entity_list(mapping);
    let mut notices = Vec::new();
    let mut sections = Vec::with_capacity(mapping.articles.len());
    for article in &mapping.articles {
        let info = kg.article(article).ok_or(DescribeError::UnknownArticle(*article))?;
        let fillers = fillers_for(mapping, kg, article);
        let how: Vec<String> = info
            .obligations
            .iter()
            .map(|o| fillers.fill(o, article, &mut notices))
            .collect();
        let why = fillers.fill(&info.rationale, article, &mut notices);
        let source = format!("{article} — {}", info.title);

        let context = info
            .context
            .clone()
            .unwrap_or_else(|| format!("obligations on {}", info.title.to_lowercase()));
        let mut opening = format!("This user story involves {context}");
        if !entities.is_empty() {
            opening.push_str(&format!(" ({})", entities.join(", ")));
        }
        opening.push_str(". ");
        let mut segments = vec![Segment::new(Tag::Plain, opening)];
        for h in &how {
            segments.push(Segment::new(Tag::How, h.clone()));
            segments.push(Segment::new(Tag::Plain, " "));
        }
        segments.push(Segment::new(Tag::Why, why.clone()));
        segments.push(Segment::new(Tag::Plain, " Source: "));
        segments.push(Segment::new(Tag::Source, source.clone()));
        sections.push(ArticleSection {
            article: *article,
            how,
            why,
            source,
            segments,
        });
    }
    notices.dedup();
    Ok(ComplianceDescription {
        story_id: mapping.story_id.clone(),
        kg_version: kg.version().to_string(),
        none_required: sections.is_empty(),
        sections,
        notices,
    })
}

/// Composes the description for a `Resolved` story and marks it `Described`.
pub fn generate(
    story: &mut UserStory,
    mapping: &StoryMapping,
    kg: &KnowledgeGraph,
) -> Result<ComplianceDescription, DescribeError> {
    if story.status() != StoryStatus::Resolved {
        return Err(DescribeError::WrongState {
            id: story.id.clone(),
            actual: story.status(),
        });
    }
    if mapping.story_id != story.id || mapping.story_revision != story.revision() {
        return Err(DescribeError::StaleMapping {
            mapping_story: mapping.story_id.clone(),
            mapping_revision: mapping.story_revision,
            story: story.id.clone(),
            revision: story.revision(),
        });
    }
    let desc = compose(mapping, kg)?;
    story
        .advance(StoryStatus::Described)
        .expect("resolved story can be described");
    Ok(desc)
}

/// Wire form of a description: segments only, tags preserved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDescription {
    pub story_id: StoryId,
    pub kg_version: String,
    pub none_required: bool,
    pub sections: Vec<AnnotatedSection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSection {
    pub article: ArticleId,
    pub segments: Vec<Segment>,
}

impl From<&ComplianceDescription> for AnnotatedDescription {
    fn from(d: &ComplianceDescription) -> Self {
        Self {
            story_id: d.story_id.clone(),
            kg_version: d.kg_version.clone(),
            none_required: d.none_required,
            sections: d
                .sections
                .iter()
                .map(|s| AnnotatedSection {
                    article: s.article,
                    segments: s.segments.clone(),
                })
                .collect(),
        }
    }
}

/// Parses the `AnnotatedJson` rendering back, checking the section invariants.
pub fn parse_annotated(src: &str) -> Result<AnnotatedDescription, DescribeError> {
    let d: AnnotatedDescription =
        serde_json::from_str(src).map_err(|e| DescribeError::BadAnnotation(e.to_string()))?;
    if d.none_required != d.sections.is_empty() {
        return Err(DescribeError::BadAnnotation("none_required disagrees with sections".into()));
    }
    for s in &d.sections {
        for tag in [Tag::How, Tag::Why, Tag::Source] {
            if !s.segments.iter().any(|seg| seg.tag == tag) {
                return Err(DescribeError::BadAnnotation(format!("{} lacks a {tag:?} segment", s.article)));
            }
        }
    }
    Ok(d)
}

fn escape_markdown(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '*' | '_' | '`' | '<' | '>' | '[' | ']' | '\\' | '#') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

pub fn render(desc: &ComplianceDescription, format: Format) -> String {
    match format {
        Format::AnnotatedJson => {
            serde_json::to_string_pretty(&AnnotatedDescription::from(desc)).expect("description serializes")
        }
        Format::PlainText if desc.none_required => NONE_REQUIRED.to_string(),
        Format::PlainText => desc
            .sections
            .iter()
            .map(|s| s.segments.iter().map(|seg| seg.text.as_str()).collect::<String>())
            .collect::<Vec<_>>()
            .join("\n\n"),
        Format::Markdown if desc.none_required => NONE_REQUIRED.to_string(),
        Format::Markdown => desc
            .sections
            .iter()
            .map(|s| {
                let body: String = s
                    .segments
                    .iter()
                    .map(|seg| {
                        let t = escape_markdown(&seg.text);
                        match seg.tag {
                            Tag::How => format!("**{t}**"),
                            Tag::Why => format!("*{t}*"),
                            Tag::Source => format!("<u>{t}</u>"),
                            Tag::Plain => t,
                        }
                    })
                    .collect();
                format!("### {}\n\n{body}", s.article)
            })
            .collect::<Vec<_>>()
            .join("\n\n"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolishError {
    #[error("segment structure changed")]
    Structure,
    #[error("source segment changed")]
    SourceChanged,
    #[error("article ids differ in segment {0}")]
    ArticleIds(usize),
    #[error("segment {0} became empty")]
    Empty(usize),
}

fn article_mentions(s: &str) -> Vec<String> {
    let mut out: Vec<String> = s
        .match_indices("Art.")
        .map(|(i, _)| {
            s[i..]
                .chars()
                .take_while(|c| !c.is_whitespace() && *c != ',' && *c != ';')
                .collect::<String>()
                .trim_end_matches(['.', ':'])
                .to_string()
        })
        .collect();
    out.sort();
    out
}

/// Checks that a rephrased section keeps tags, sources and article ids.
pub fn check_polish(before: &ArticleSection, after: &ArticleSection) -> Result<(), PolishError> {
    if before.article != after.article || before.segments.len() != after.segments.len() {
        return Err(PolishError::Structure);
    }
    for (i, (b, a)) in before.segments.iter().zip(&after.segments).enumerate() {
        if b.tag != a.tag {
            return Err(PolishError::Structure);
        }
        if b.tag == Tag::Source && b.text != a.text {
            return Err(PolishError::SourceChanged);
        }
        if a.text.trim().is_empty() && !b.text.trim().is_empty() {
            return Err(PolishError::Empty(i));
        }
        if article_mentions(&b.text) != article_mentions(&a.text) {
            return Err(PolishError::ArticleIds(i));
        }
    }
    Ok(())
}

/// Rephrases `How` and `Why` segments through `service`. A section whose
/// rewrite fails the checker, or whose service call fails, is kept verbatim.
pub fn polish(desc: &ComplianceDescription, service: &dyn CorrectionService) -> (ComplianceDescription, Vec<String>) {
    let mut out = desc.clone();
    let mut notices = Vec::new();
    for section in &mut out.sections {
        let mut candidate = section.clone();
        let mut failed = false;
        for seg in &mut candidate.segments {
            if matches!(seg.tag, Tag::How | Tag::Why) {
                match service.correct(&seg.text) {
                    Ok(t) => seg.text = t,
                    Err(e) => {
                        notices.push(format!("{}: polish skipped ({e})", section.article));
                        failed = true;
                        break;
                    }
                }
            }
        }
        if failed {
            continue;
        }
        match check_polish(section, &candidate) {
            Ok(()) => {
                candidate.how = candidate
                    .segments
                    .iter()
                    .filter(|s| s.tag == Tag::How)
                    .map(|s| s.text.clone())
                    .collect();
                candidate.why = candidate
                    .segments
                    .iter()
                    .find(|s| s.tag == Tag::Why)
                    .map(|s| s.text.clone())
                    .unwrap_or_default();
                *section = candidate;
            }
            Err(e) => notices.push(format!("{}: polish rejected ({e})", section.article)),
        }
    }
    (out, notices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{map_story, ArticleInfo, EntityDecl, KgFile, MappingRule};
    use crate::normalize::ServiceError;
    use crate::story::{parse_story, Element};
    use regex::Regex;

    fn kg() -> KnowledgeGraph {
        let art = |id: &str, title: &str, context: Option<&str>, obligations: &[&str]| EntityDecl {
            id: id.into(),
            kind: EntityKind::Article,
            info: Some(ArticleInfo {
                title: title.into(),
                summary: "s".into(),
                obligations: obligations.iter().map(|s| s.to_string()).collect(),
                rationale: format!("{id} applies to {{data_entity}}."),
                context: context.map(String::from),
            }),
        };
        KnowledgeGraph::build(KgFile {
            kg_version: "k1".into(),
            entities: vec![
                art(
                    "Art.4(1)",
                    "definition of personal data",
                    Some("the processing of personal data"),
                    &["Treat the {data_entity} as personal data.", "Record why {actor} needs the {data_entity}."],
                ),
                art("Art.5(1)(b)", "purpose limitation", None, &["Use the {data_entity} only for the stated purpose."]),
                art("Art.17", "Right to Erasure", None, &["Let {actor} {action} without undue delay.", "Propagate erasure to processors."]),
                EntityDecl { id: "passport".into(), kind: EntityKind::DataEntity, info: None },
                EntityDecl { id: "delete_account".into(), kind: EntityKind::Action, info: None },
            ],
            triples: vec![],
            rules: vec![
                MappingRule {
                    id: "passport".into(),
                    element: Element::What,
                    phrases: vec!["passport".into()],
                    entity: Some("passport".into()),
                    articles: vec!["Art.4(1)".parse().unwrap(), "Art.5(1)(b)".parse().unwrap()],
                    note: String::new(),
                },
                MappingRule {
                    id: "erase".into(),
                    element: Element::What,
                    phrases: vec!["delete account".into()],
                    entity: Some("delete_account".into()),
                    articles: vec!["Art.17".parse().unwrap()],
                    note: String::new(),
                },
            ],
        })
        .unwrap()
    }

    fn resolved(text: &str) -> UserStory {
        let mut s = parse_story("s", text).story;
        s.advance(StoryStatus::Resolved).unwrap();
        s
    }

    fn describe(text: &str) -> (UserStory, ComplianceDescription) {
        let kg = kg();
        let mut s = resolved(text);
        let m = map_story(&s, kg.rules(), &kg).unwrap();
        let d = generate(&mut s, &m, &kg).unwrap();
        (s, d)
    }

    #[test]
    fn passport_sections() {
        let (s, d) = describe("As a user, I want to upload my passport for identity verification so that my account is trusted.");
        assert_eq!(s.status(), StoryStatus::Described);
        let arts: Vec<String> = d.sections.iter().map(|s| s.article.to_string()).collect();
        assert_eq!(arts, ["Art.4(1)", "Art.5(1)(b)"]);
        let first = &d.sections[0];
        assert!(first.segments.iter().any(|s| s.tag == Tag::Source && s.text == "Art.4(1) — definition of personal data"));
        assert!(first.segments.iter().any(|s| s.tag == Tag::How && s.text.contains("passport")));
        assert!(first.segments[0].text.starts_with("This user story involves the processing of personal data"));
        assert!(!d.none_required);
    }

    #[test]
    fn erasure_section() {
        let (_, d) = describe("As a user, I want to delete my account so that my data is removed.");
        assert_eq!(d.sections.len(), 1);
        assert_eq!(d.sections[0].article.to_string(), "Art.17");
        assert!(d.sections[0].segments.iter().any(|s| s.tag == Tag::Source && s.text.contains("Right to Erasure")));
        assert!(d.sections[0].how[0].contains("Let user delete my account"));
        // Art.17's rationale names {data_entity}, which this story lacks.
        assert!(d.sections[0].why.contains(GENERIC_ENTITY));
        assert_eq!(d.notices.len(), 1);
    }

    #[test]
    fn nothing_to_describe() {
        let (_, d) = describe("As a user, I want to change my UI theme so that the app looks better.");
        assert!(d.none_required);
        assert!(d.sections.is_empty());
        assert_eq!(render(&d, Format::PlainText), NONE_REQUIRED);
    }

    #[test]
    fn guards() {
        let kg = kg();
        let mut s = parse_story("s", "As a user, I want to delete my account so that my data is removed.").story;
        let mut r = resolved(s.raw_text());
        let mut m = map_story(&r, kg.rules(), &kg).unwrap();
        assert!(matches!(generate(&mut s, &m, &kg), Err(DescribeError::WrongState { .. })));
        m.kg_version = "old".into();
        assert!(matches!(generate(&mut r, &m, &kg), Err(DescribeError::VersionMismatch { .. })));
        assert_eq!(r.status(), StoryStatus::Resolved);
    }

    #[test]
    fn every_section_has_the_triad() {
        let (_, d) = describe("As a user, I want to upload my passport for identity verification so that my account is trusted.");
        for s in &d.sections {
            for tag in [Tag::How, Tag::Why, Tag::Source] {
                assert!(s.segments.iter().any(|x| x.tag == tag));
            }
            let sources: Vec<_> = s.segments.iter().filter(|x| x.tag == Tag::Source).collect();
            assert_eq!(sources.len(), 1);
            assert!(sources[0].text.starts_with(&s.article.to_string()));
        }
    }

    #[test]
    fn how_clauses_trace_to_obligations() {
        let kg = kg();
        let (_, d) = describe("As a user, I want to upload my passport for identity verification so that my account is trusted.");
        for s in &d.sections {
            let obligations = &kg.article(&s.article).unwrap().obligations;
            for h in &s.how {
                let traced = obligations.iter().any(|o| {
                    let pattern = regex::escape(o)
                        .replace(r"\{data_entity\}", ".+")
                        .replace(r"\{action\}", ".+")
                        .replace(r"\{actor\}", ".+");
                    Regex::new(&format!("^{pattern}$")).unwrap().is_match(h)
                });
                assert!(traced, "{h}");
            }
        }
    }

    #[test]
    fn compose_is_pure() {
        let kg = kg();
        let s = resolved("As a user, I want to upload my passport for identity verification so that my account is trusted.");
        let m = map_story(&s, kg.rules(), &kg).unwrap();
        let a = render(&compose(&m, &kg).unwrap(), Format::AnnotatedJson);
        let b = render(&compose(&m, &kg).unwrap(), Format::AnnotatedJson);
        assert_eq!(a, b);
    }

    #[test]
    fn markdown_bold_runs_match_how_tags() {
        let (_, d) = describe("As a user, I want to upload my passport for identity verification so that my account is trusted.");
        for section in &d.sections {
            let one = ComplianceDescription {
                sections: vec![section.clone()],
                ..d.clone()
            };
            let md = render(&one, Format::Markdown);
            let annotated = parse_annotated(&render(&one, Format::AnnotatedJson)).unwrap();
            let how_tags = annotated.sections[0].segments.iter().filter(|s| s.tag == Tag::How).count();
            let bold_runs = Regex::new(r"\*\*[^*]+\*\*").unwrap().find_iter(&md).count();
            assert_eq!(bold_runs, how_tags);
            assert!(md.contains("<u>"));
        }
    }

    #[test]
    fn annotated_round_trip() {
        for text in [
            "As a user, I want to upload my passport for identity verification so that my account is trusted.",
            "As a user, I want to delete my account so that my data is removed.",
            "As a user, I want to change my UI theme so that the app looks better.",
        ] {
            let (_, d) = describe(text);
            let back = parse_annotated(&render(&d, Format::AnnotatedJson)).unwrap();
            assert_eq!(back, AnnotatedDescription::from(&d));
            let segs: Vec<_> = d.sections.iter().map(|s| s.segments.clone()).collect();
            let back_segs: Vec<_> = back.sections.into_iter().map(|s| s.segments).collect();
            assert_eq!(segs, back_segs);
        }
        assert!(parse_annotated(r#"{"story_id":"s","kg_version":"k","none_required":true,"sections":[{"article":"Art.6","segments":[]}]}"#).is_err());
        assert!(parse_annotated(r#"{"story_id":"s","kg_version":"k","none_required":false,"sections":[{"article":"Art.6","segments":[{"text":"x","tag":"Bold"}]}]}"#).is_err());
    }

    struct Prefix;
    impl CorrectionService for Prefix {
        fn correct(&self, t: &str) -> Result<String, ServiceError> {
            Ok(format!("Always: {t}"))
        }
    }

    struct DropArticles;
    impl CorrectionService for DropArticles {
        fn correct(&self, t: &str) -> Result<String, ServiceError> {
            Ok(t.replace("Art.", "Article "))
        }
    }

    #[test]
    fn polish_keeps_structure() {
        let (_, d) = describe("As a user, I want to upload my passport for identity verification so that my account is trusted.");
        let (p, notices) = polish(&d, &Prefix);
        assert!(notices.is_empty());
        for (a, b) in d.sections.iter().zip(&p.sections) {
            check_polish(a, b).unwrap();
            assert_eq!(b.how[0], format!("Always: {}", a.how[0]));
        }
        let (kept, notices) = polish(&d, &DropArticles);
        assert_eq!(kept, d);
        assert_eq!(notices.len(), 2);
    }
}
