//! Registry of GDPR enforcement cases, matched to stories by article.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::NaiveDate;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::kg::ArticleId;
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnforcementCase {
    pub id: String,
    pub controller: String,
    pub authority: String,
    pub country: String,
    pub date: NaiveDate,
    pub fine_eur: u64,
    pub violated_articles: Vec<ArticleId>,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub source_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CaseError {
    #[error("cannot parse case file: {0}")]
    Parse(String),
    #[error("case id {0:?} appears twice")]
    DuplicateId(String),
    #[error("case {case}: {value:?} is not a canonical article id")]
    BadArticleId { case: String, value: String },
    #[error("case {case}: {value:?} is not an ISO-8601 date")]
    BadDate { case: String, value: String },
    #[error("case {0}: fine must be a non-negative whole number of euros")]
    BadFine(String),
    #[error("case {0}: no violated articles")]
    NoArticles(String),
}

/// A case as written in the file, before validation.
#[derive(Debug, Deserialize)]
struct RawCase {
    id: String,
    controller: String,
    authority: String,
    country: String,
    date: String,
    fine_eur: serde_json::Value,
    violated_articles: Vec<String>,
    #[serde(default)]
    summary: String,
    #[serde(default)]
    source_url: String,
}

impl RawCase {
    fn validate(self) -> Result<EnforcementCase, CaseError> {
        let date = NaiveDate::parse_from_str(&self.date, "%Y-%m-%d").map_err(|_| CaseError::BadDate {
            case: self.id.clone(),
            value: self.date.clone(),
        })?;
        let fine_eur = self.fine_eur.as_u64().ok_or_else(|| CaseError::BadFine(self.id.clone()))?;
        if self.violated_articles.is_empty() {
            return Err(CaseError::NoArticles(self.id));
        }
        let violated_articles = self
            .violated_articles
            .iter()
            .map(|a| {
                a.parse().map_err(|_| CaseError::BadArticleId {
                    case: self.id.clone(),
                    value: a.clone(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(EnforcementCase {
            id: self.id,
            controller: self.controller,
            authority: self.authority,
            country: self.country,
            date,
            fine_eur,
            violated_articles,
            summary: self.summary,
            source_url: self.source_url,
        })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CaseFile {
    Versioned { dataset_version: String, cases: Vec<RawCase> },
    Bare(Vec<RawCase>),
}

#[derive(Debug, Clone, Default)]
pub struct CaseRegistry {
    dataset_version: String,
    cases: Vec<EnforcementCase>,
    by_article: BTreeMap<ArticleId, Vec<usize>>,
}

/// A case relevant to a story. `score` is the share of story articles the
/// case covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMatch<S = Rational64> {
    pub case: EnforcementCase,
    pub overlap: Vec<ArticleId>,
    pub score: S,
}

impl CaseRegistry {
    /// Reads a JSON array of cases or `{dataset_version, cases}`. Blank input
    /// gives an empty registry.
    pub fn ingest(src: &str) -> Result<Self, CaseError> {
        if src.trim().is_empty() {
            return Ok(Self::default());
        }
        let file: CaseFile = serde_json::from_str(src).map_err(|e| CaseError::Parse(e.to_string()))?;
        let (version, raw) = match file {
            CaseFile::Versioned { dataset_version, cases } => (dataset_version, cases),
            CaseFile::Bare(cases) => (String::new(), cases),
        };
        let cases = raw.into_iter().map(RawCase::validate).collect::<Result<Vec<_>, _>>()?;
        Self::from_cases(version, cases)
    }

    pub fn from_cases(dataset_version: impl Into<String>, cases: Vec<EnforcementCase>) -> Result<Self, CaseError> {
        let mut ids = HashSet::new();
        let mut by_article: BTreeMap<ArticleId, Vec<usize>> = BTreeMap::new();
        for (i, c) in cases.iter().enumerate() {
            if !ids.insert(c.id.clone()) {
                return Err(CaseError::DuplicateId(c.id.clone()));
            }
            if c.violated_articles.is_empty() {
                return Err(CaseError::NoArticles(c.id.clone()));
            }
            for a in c.violated_articles.iter().collect::<BTreeSet<_>>() {
                by_article.entry(*a).or_default().push(i);
            }
        }
        Ok(Self {
            dataset_version: dataset_version.into(),
            cases,
            by_article,
        })
    }

    pub fn dataset_version(&self) -> &str {
        &self.dataset_version
    }

    pub fn cases(&self) -> &[EnforcementCase] {
        &self.cases
    }

    pub fn get(&self, id: &str) -> Option<&EnforcementCase> {
        self.cases.iter().find(|c| c.id == id)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Cases citing any of `articles` (or a parent of one), best first.
    ///
    /// Ranking: more overlapping articles, then larger fine, then more recent,
    /// then case id. An empty article set or `limit` of zero gives no matches.
    pub fn match_cases(&self, articles: &[ArticleId], limit: usize) -> Vec<CaseMatch> {
        self.match_cases_as(articles, limit)
    }

    pub fn match_cases_as<S: Scalar>(&self, articles: &[ArticleId], limit: usize) -> Vec<CaseMatch<S>> {
        let mut wanted: Vec<ArticleId> = Vec::new();
        for a in articles {
            if !wanted.contains(a) {
                wanted.push(*a);
            }
        }
        let mut candidates = BTreeSet::new();
        for a in &wanted {
            for key in std::iter::once(*a).chain(a.ancestors()) {
                candidates.extend(self.by_article.get(&key).into_iter().flatten().copied());
            }
        }
        let mut out: Vec<CaseMatch<S>> = candidates
            .into_iter()
            .map(|i| {
                let case = &self.cases[i];
                let overlap: Vec<ArticleId> = wanted
                    .iter()
                    .filter(|a| case.violated_articles.iter().any(|c| a.is_within(c)))
                    .copied()
                    .collect();
                CaseMatch {
                    score: S::ratio(overlap.len() as i64, wanted.len() as i64),
                    overlap,
                    case: case.clone(),
                }
            })
            .collect();
        out.sort_by(|a, b| rank(&a.case, a.overlap.len(), &b.case, b.overlap.len()));
        out.truncate(limit);
        out
    }
}

/// Total order used for ranking; `Less` means `a` ranks first.
pub fn rank(a: &EnforcementCase, a_overlap: usize, b: &EnforcementCase, b_overlap: usize) -> Ordering {
    b_overlap
        .cmp(&a_overlap)
        .then_with(|| b.fine_eur.cmp(&a.fine_eur))
        .then_with(|| b.date.cmp(&a.date))
        .then_with(|| a.id.cmp(&b.id))
}
