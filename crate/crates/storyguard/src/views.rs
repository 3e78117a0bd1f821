//! JSON shapes for API and CLI output. Exact ratios are sent both as a
//! `"n/d"` string and as a float.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use storyguard_core::cases::EnforcementCase;
use storyguard_core::kg::ArticleId;
use storyguard_core::survey::{Component, Phase};
use storyguard_core::{ExactCaseMatch, ExactDelta, ExactScore, Rational64, Scalar};

use crate::service::AttitudeReport;
use crate::store::SurveyEntry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub exact: String,
    pub value: f64,
}

impl From<&Rational64> for Ratio {
    fn from(r: &Rational64) -> Self {
        let exact = if *r.denom() == 1 {
            r.numer().to_string()
        } else {
            format!("{}/{}", r.numer(), r.denom())
        };
        Self { exact, value: r.approx() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMatchView {
    pub case: EnforcementCase,
    pub overlap: Vec<ArticleId>,
    pub score: Ratio,
}

impl From<&ExactCaseMatch> for CaseMatchView {
    fn from(m: &ExactCaseMatch) -> Self {
        Self {
            case: m.case.clone(),
            overlap: m.overlap.clone(),
            score: Ratio::from(&m.score),
        }
    }
}

pub fn case_views(ms: &[ExactCaseMatch]) -> Vec<CaseMatchView> {
    ms.iter().map(CaseMatchView::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreView {
    pub questionnaire_version: String,
    pub per_component: BTreeMap<Component, Ratio>,
    pub overall: Ratio,
}

impl From<&ExactScore> for ScoreView {
    fn from(s: &ExactScore) -> Self {
        Self {
            questionnaire_version: s.questionnaire_version.clone(),
            per_component: s.per_component.iter().map(|(k, v)| (*k, Ratio::from(v))).collect(),
            overall: Ratio::from(&s.overall),
        }
    }
}

impl From<&ExactDelta> for ScoreView {
    fn from(s: &ExactDelta) -> Self {
        Self {
            questionnaire_version: s.questionnaire_version.clone(),
            per_component: s.per_component.iter().map(|(k, v)| (*k, Ratio::from(v))).collect(),
            overall: Ratio::from(&s.overall),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryView {
    pub respondent_id: String,
    pub timestamp: chrono::DateTime<chrono::Utc>,
    pub phase: Phase,
    pub answers: BTreeMap<String, i64>,
    pub score: ScoreView,
}

impl From<&SurveyEntry> for EntryView {
    fn from(e: &SurveyEntry) -> Self {
        Self {
            respondent_id: e.response.respondent_id.clone(),
            timestamp: e.response.timestamp,
            phase: e.response.phase,
            answers: e.response.answers.clone(),
            score: ScoreView::from(&e.score),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttitudeView {
    pub respondent_id: String,
    pub latest: Option<EntryView>,
    pub history: Vec<EntryView>,
    pub delta: Option<ScoreView>,
}

impl From<&AttitudeReport> for AttitudeView {
    fn from(r: &AttitudeReport) -> Self {
        Self {
            respondent_id: r.respondent_id.clone(),
            latest: r.latest.as_ref().map(EntryView::from),
            history: r.history.iter().map(EntryView::from).collect(),
            delta: r.delta.as_ref().map(ScoreView::from),
        }
    }
}
