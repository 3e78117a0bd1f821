//! Privacy-attitude questionnaire scoring on a 1 to 5 Likert scale.
//!
//! Component scores are the mean of the component's answers, reverse-scored
//! items flipped to `6 - v` first. The overall score is the unweighted mean
//! of the three component scores.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::num::Scalar;

pub const LIKERT_MIN: i64 = 1;
pub const LIKERT_MAX: i64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Attitude,
    SubjectiveNorm,
    PerceivedControl,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Attitude, Component::SubjectiveNorm, Component::PerceivedControl];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub component: Component,
    #[serde(default)]
    pub reverse_scored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub version: String,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Pre,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub respondent_id: String,
    pub timestamp: DateTime<Utc>,
    pub phase: Phase,
    pub answers: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SurveyError {
    #[error("invalid questionnaire: {0}")]
    InvalidQuestionnaire(String),
    #[error("response is incomplete: missing {missing:?}, unknown {unknown:?}")]
    IncompleteResponse { missing: Vec<String>, unknown: Vec<String> },
    #[error("answer {value} to {question} is outside 1..=5")]
    OutOfRangeAnswer { question: String, value: i64 },
    #[error("scores come from questionnaire {pre} and {post}")]
    VersionMismatch { pre: String, post: String },
}

impl Questionnaire {
    pub fn from_json(src: &str) -> Result<Self, SurveyError> {
        let q: Questionnaire =
            serde_json::from_str(src).map_err(|e| SurveyError::InvalidQuestionnaire(e.to_string()))?;
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        let bad = |m: String| Err(SurveyError::InvalidQuestionnaire(m));
        if self.version.trim().is_empty() {
            return bad("empty version".into());
        }
        let mut ids = HashSet::new();
        for q in &self.questions {
            if q.text.trim().is_empty() {
                return bad(format!("question {} has no text", q.id));
            }
            if !ids.insert(&q.id) {
                return bad(format!("question id {} repeats", q.id));
            }
        }
        for c in Component::ALL {
            if !self.questions.iter().any(|q| q.component == c) {
                return bad(format!("no question for {c:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttitudeScore<S> {
    pub questionnaire_version: String,
    pub per_component: BTreeMap<Component, S>,
    pub overall: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport<S> {
    pub questionnaire_version: String,
    pub per_component: BTreeMap<Component, S>,
    pub overall: S,
}

/// Likert value after reverse scoring.
pub fn adjusted(value: i64, reverse: bool) -> i64 {
    if reverse {
        LIKERT_MIN + LIKERT_MAX - value
    } else {
        value
    }
}

pub fn check_response(response: &SurveyResponse, questionnaire: &Questionnaire) -> Result<(), SurveyError> {
    let missing: Vec<String> = questionnaire
        .questions
        .iter()
        .filter(|q| !response.answers.contains_key(&q.id))
        .map(|q| q.id.clone())
        .collect();
    let known: HashSet<&str> = questionnaire.questions.iter().map(|q| q.id.as_str()).collect();
    let unknown: Vec<String> = response
        .answers
        .keys()
        .filter(|k| !known.contains(k.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(SurveyError::IncompleteResponse { missing, unknown });
    }
    for (question, &value) in &response.answers {
        if !(LIKERT_MIN..=LIKERT_MAX).contains(&value) {
            return Err(SurveyError::OutOfRangeAnswer {
                question: question.clone(),
                value,
            });
        }
    }
    Ok(())
}

pub fn score<S: Scalar>(response: &SurveyResponse, questionnaire: &Questionnaire) -> Result<AttitudeScore<S>, SurveyError> {
    check_response(response, questionnaire)?;
    let mut sums: BTreeMap<Component, (i64, i64)> = BTreeMap::new();
    for q in &questionnaire.questions {
        let v = adjusted(response.answers[&q.id], q.reverse_scored);
        let e = sums.entry(q.component).or_insert((0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let per_component: BTreeMap<Component, S> = sums.into_iter().map(|(c, (sum, n))| (c, S::ratio(sum, n))).collect();
    let total = per_component.values().cloned().fold(S::zero(), |a, b| a + b);
    let overall = total / S::from_int(per_component.len() as i64);
    Ok(AttitudeScore {
        questionnaire_version: questionnaire.version.clone(),
        per_component,
        overall,
    })
}

/// `post - pre` for each component and overall.
pub fn compare<S: Scalar>(pre: &AttitudeScore<S>, post: &AttitudeScore<S>) -> Result<DeltaReport<S>, SurveyError> {
    if pre.questionnaire_version != post.questionnaire_version {
        return Err(SurveyError::VersionMismatch {
            pre: pre.questionnaire_version.clone(),
            post: post.questionnaire_version.clone(),
        });
    }
    let per_component = post
        .per_component
        .iter()
        .map(|(c, p)| {
            let before = pre.per_component.get(c).cloned().unwrap_or_else(S::zero);
            (*c, p.clone() - before)
        })
        .collect();
    Ok(DeltaReport {
        questionnaire_version: post.questionnaire_version.clone(),
        per_component,
        overall: post.overall.clone() - pre.overall.clone(),
    })
}
