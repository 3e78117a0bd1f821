//! The pipeline as a state machine over persisted projects.
//!
//! Mutations on one project are serialized by a per-project lock and guarded
//! by compare-and-set on the project revision. Module data lives in an
//! [`Engine`] shared read-only by every request and swapped whole on reload.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use storyguard_core::ambiguity::{self, AmbiguityError, ResolveOutcome};
use storyguard_core::cases::CaseError;
use storyguard_core::describe::{self, AnnotatedDescription, ComplianceDescription, DescribeError};
use storyguard_core::diagnostic::{Diagnostic, DiagnosticId};
use storyguard_core::kg::{self, KgError, StoryMapping};
use storyguard_core::normalize::{self, CorrectionProposal, CorrectionService, NormalizeError};
use storyguard_core::story::{self, Element, ParseResult, StoryStatus};
use storyguard_core::survey::{self, Phase, SurveyError, SurveyResponse};
use storyguard_core::{ExactCaseMatch, ExactDelta};

use crate::batch::{parse_batch, BatchError, StoryInput};
use crate::engine::{DataPaths, Engine, EngineError};
use crate::project::{Actor, PipelineEvent, Project, ProjectSummary};
use crate::store::{is_safe_id, ProjectStore, StoreError, SurveyEntry, SurveyRecord};

/// Default number of cases returned by `MatchCases`.
pub const DEFAULT_CASE_LIMIT: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("revision conflict: expected {expected}, project is at {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error("story {story} is {actual}; this step requires {required}")]
    WrongState {
        story: String,
        actual: StoryStatus,
        required: StoryStatus,
    },
    #[error("the batch contains no stories")]
    EmptyBatch,
    #[error("malformed batch: {0}")]
    MalformedFile(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Normalize(NormalizeError),
    #[error(transparent)]
    Ambiguity(AmbiguityError),
    #[error(transparent)]
    Kg(KgError),
    #[error(transparent)]
    Describe(DescribeError),
    #[error(transparent)]
    Cases(#[from] CaseError),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl From<BatchError> for ServiceError {
    fn from(e: BatchError) -> Self {
        match e {
            BatchError::Empty => ServiceError::EmptyBatch,
            BatchError::Malformed(m) => ServiceError::MalformedFile(m),
        }
    }
}

// Module state errors are lifted into the service's own `WrongState`.

impl From<NormalizeError> for ServiceError {
    fn from(e: NormalizeError) -> Self {
        match e {
            NormalizeError::WrongState { id, actual } => ServiceError::WrongState {
                story: id.0,
                actual,
                required: StoryStatus::Draft,
            },
            e => ServiceError::Normalize(e),
        }
    }
}

impl From<AmbiguityError> for ServiceError {
    fn from(e: AmbiguityError) -> Self {
        match e {
            AmbiguityError::WrongState { id, actual, required } => ServiceError::WrongState {
                story: id.0,
                actual,
                required,
            },
            e => ServiceError::Ambiguity(e),
        }
    }
}

impl From<KgError> for ServiceError {
    fn from(e: KgError) -> Self {
        match e {
            KgError::WrongState { id, actual } => ServiceError::WrongState {
                story: id.0,
                actual,
                required: StoryStatus::Resolved,
            },
            e => ServiceError::Kg(e),
        }
    }
}

impl From<DescribeError> for ServiceError {
    fn from(e: DescribeError) -> Self {
        match e {
            DescribeError::WrongState { id, actual } => ServiceError::WrongState {
                story: id.0,
                actual,
                required: StoryStatus::Resolved,
            },
            e => ServiceError::Describe(e),
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Normalize,
    Detect,
    Map,
    Describe,
    MatchCases,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Normalize, Stage::Detect, Stage::Map, Stage::Describe, Stage::MatchCases];

    pub fn required(self) -> StoryStatus {
        match self {
            Stage::Normalize => StoryStatus::Draft,
            Stage::Detect => StoryStatus::Normalized,
            Stage::Map | Stage::Describe => StoryStatus::Resolved,
            Stage::MatchCases => StoryStatus::Described,
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "normalize" => Ok(Stage::Normalize),
            "detect" => Ok(Stage::Detect),
            "map" => Ok(Stage::Map),
            "describe" => Ok(Stage::Describe),
            "match_cases" | "cases" => Ok(Stage::MatchCases),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptView {
    pub status: StoryStatus,
    pub missing: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum StageOutcome {
    /// A proposal with no edits is accepted straight away.
    Normalize {
        proposal: CorrectionProposal,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        accepted: Option<AcceptView>,
    },
    Detect {
        status: StoryStatus,
        diagnostics: Vec<Diagnostic>,
    },
    Map {
        mapping: StoryMapping,
    },
    Describe {
        description: AnnotatedDescription,
        notices: Vec<String>,
    },
    MatchCases {
        dataset_version: String,
        matches: Vec<ExactCaseMatch>,
    },
}

/// Everything known about one story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryView {
    pub project_revision: u64,
    pub story: story::UserStory,
    pub diagnostics: Vec<Diagnostic>,
    pub proposal: Option<CorrectionProposal>,
    pub mapping: Option<StoryMapping>,
    pub description: Option<AnnotatedDescription>,
    pub case_matches: Option<Vec<ExactCaseMatch>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttitudeReport {
    pub respondent_id: String,
    pub latest: Option<SurveyEntry>,
    pub history: Vec<SurveyEntry>,
    /// Latest post-phase score minus latest pre-phase score, when both exist.
    pub delta: Option<ExactDelta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub kg_version: String,
    pub dataset_version: String,
    pub questionnaire_version: String,
}

type Locks = Mutex<HashMap<String, Arc<Mutex<()>>>>;

pub struct Service {
    engine: RwLock<Arc<Engine>>,
    paths: DataPaths,
    correction: Option<Arc<dyn CorrectionService>>,
    store: Arc<dyn ProjectStore>,
    project_locks: Locks,
    survey_locks: Locks,
    next_id: AtomicU64,
}

fn lock_for(locks: &Locks, key: &str) -> Arc<Mutex<()>> {
    locks.lock().unwrap().entry(key.to_string()).or_default().clone()
}

fn wrong_state(story: &story::UserStory, required: StoryStatus) -> ServiceError {
    ServiceError::WrongState {
        story: story.id.0.clone(),
        actual: story.status(),
        required,
    }
}

fn missing_story(project: &str, story: &str) -> ServiceError {
    ServiceError::NotFound(format!("story {story} in project {project}"))
}

impl Service {
    pub fn new(engine: Engine, store: Arc<dyn ProjectStore>) -> Self {
        Self::shared(Arc::new(engine), store)
    }

    /// Like `new`, reusing module data already shared with other services.
    pub fn shared(engine: Arc<Engine>, store: Arc<dyn ProjectStore>) -> Self {
        Self {
            engine: RwLock::new(engine),
            paths: DataPaths::default(),
            correction: None,
            store,
            project_locks: Mutex::default(),
            survey_locks: Mutex::default(),
            next_id: AtomicU64::new(0),
        }
    }

    /// Loads module data from `paths`; `reload` re-reads the same files.
    pub fn from_paths(
        paths: DataPaths,
        correction: Option<Arc<dyn CorrectionService>>,
        store: Arc<dyn ProjectStore>,
    ) -> Result<Self> {
        let engine = Engine::load(&paths, correction.clone())?;
        let mut s = Self::new(engine, store);
        s.paths = paths;
        s.correction = correction;
        Ok(s)
    }

    pub fn engine(&self) -> Arc<Engine> {
        self.engine.read().unwrap().clone()
    }

    pub fn versions(&self) -> Versions {
        let e = self.engine();
        Versions {
            kg_version: e.kg.version().to_string(),
            dataset_version: e.cases.dataset_version().to_string(),
            questionnaire_version: e.questionnaire.version.clone(),
        }
    }

    /// Re-reads every data file. On failure the running data stays in place.
    pub fn reload(&self) -> Result<Versions> {
        let engine = Engine::load(&self.paths, self.correction.clone())?;
        *self.engine.write().unwrap() = Arc::new(engine);
        tracing::info!(kg = self.engine().kg.version(), "module data reloaded");
        Ok(self.versions())
    }

    // ---- projects ----

    pub fn create_project(&self, name: &str, id: Option<&str>) -> Result<Project> {
        if name.trim().is_empty() {
            return Err(ServiceError::InvalidInput("project name is empty".into()));
        }
        let id = match id {
            Some(id) if !is_safe_id(id) => {
                return Err(ServiceError::InvalidInput(format!("project id {id:?} must match [A-Za-z0-9_-]{{1,64}}")))
            }
            Some(id) => id.to_string(),
            None => loop {
                let n = self.next_id.fetch_add(1, Ordering::Relaxed);
                let candidate = format!("p-{:x}-{n}", Utc::now().timestamp_millis());
                if self.store.load(&candidate)?.is_none() {
                    break candidate;
                }
            },
        };
        let lock = lock_for(&self.project_locks, &id);
        let _guard = lock.lock().unwrap();
        if self.store.load(&id)?.is_some() {
            return Err(ServiceError::InvalidInput(format!("project {id} already exists")));
        }
        let e = self.engine();
        let p = Project::new(&id, name.trim(), e.kg.version(), e.cases.dataset_version());
        self.store.save(&p)?;
        Ok(p)
    }

    pub fn list_projects(&self) -> Result<Vec<ProjectSummary>> {
        Ok(self.store.list()?.iter().map(Project::summary).collect())
    }

    pub fn project(&self, id: &str) -> Result<Project> {
        self.store
            .load(id)?
            .ok_or_else(|| ServiceError::NotFound(format!("project {id}")))
    }

    /// Runs `f` on the loaded project under its lock; saves with a bumped
    /// revision and transition events only if `f` succeeds.
    fn mutate<T>(
        &self,
        project: &str,
        expected: Option<u64>,
        actor: Actor,
        f: impl FnOnce(&mut Project, &Engine) -> Result<T>,
    ) -> Result<T> {
        let lock = lock_for(&self.project_locks, project);
        let _guard = lock.lock().unwrap();
        let mut p = self.project(project)?;
        if let Some(expected) = expected {
            if expected != p.revision {
                return Err(ServiceError::Conflict {
                    expected,
                    actual: p.revision,
                });
            }
        }
        let engine = self.engine();
        let before: BTreeMap<_, _> = p.stories.iter().map(|s| (s.id.clone(), s.status())).collect();
        let out = f(&mut p, &engine)?;
        let now = Utc::now();
        for s in &p.stories {
            if let Some(&from) = before.get(&s.id) {
                if from != s.status() {
                    p.events.push(PipelineEvent {
                        timestamp: now,
                        project: p.id.clone(),
                        story: s.id.clone(),
                        from,
                        to: s.status(),
                        actor,
                    });
                }
            }
        }
        p.revision += 1;
        p.kg_version = engine.kg.version().to_string();
        p.dataset_version = engine.cases.dataset_version().to_string();
        debug_assert_eq!(p.check(), Ok(()));
        self.store.save(&p)?;
        Ok(out)
    }

    // ---- stories ----

    pub fn import_text(&self, project: &str, src: &str, expected: Option<u64>) -> Result<Vec<ParseResult>> {
        let inputs = parse_batch(src)?;
        self.import_stories(project, inputs, expected)
    }

    /// Adds each story as `Draft` with its format findings; one revision bump
    /// for the whole batch.
    pub fn import_stories(
        &self,
        project: &str,
        inputs: Vec<StoryInput>,
        expected: Option<u64>,
    ) -> Result<Vec<ParseResult>> {
        if inputs.is_empty() {
            return Err(ServiceError::EmptyBatch);
        }
        self.mutate(project, expected, Actor::Developer, |p, _| {
            let mut taken: std::collections::HashSet<String> =
                p.stories.iter().map(|s| s.id.0.clone()).collect();
            let mut next = p.stories.len() + 1;
            let mut out = Vec::with_capacity(inputs.len());
            for input in inputs {
                let id = match input.id {
                    Some(id) => {
                        if !is_safe_id(&id) {
                            return Err(ServiceError::MalformedFile(format!(
                                "story id {id:?} must match [A-Za-z0-9_-]{{1,64}}"
                            )));
                        }
                        if !taken.insert(id.clone()) {
                            return Err(ServiceError::MalformedFile(format!("duplicate story id {id}")));
                        }
                        id
                    }
                    None => loop {
                        let candidate = format!("s{next}");
                        next += 1;
                        if taken.insert(candidate.clone()) {
                            break candidate;
                        }
                    },
                };
                let parsed = story::parse_story(id.as_str(), input.text.trim());
                p.diagnostics.extend(story::validate_format(&parsed.story));
                p.stories.push(parsed.story.clone());
                out.push(parsed);
            }
            Ok(out)
        })
    }

    pub fn story(&self, project: &str, story: &str) -> Result<StoryView> {
        let p = self.project(project)?;
        let s = p.story(story).ok_or_else(|| missing_story(project, story))?.clone();
        Ok(StoryView {
            project_revision: p.revision,
            diagnostics: p.diagnostics_for(story),
            proposal: p.proposals.get(story).cloned(),
            mapping: p.mappings.get(story).cloned(),
            description: p.descriptions.get(story).map(AnnotatedDescription::from),
            case_matches: p.case_matches.get(story).cloned(),
            story: s,
        })
    }

    pub fn description(&self, project: &str, story: &str) -> Result<ComplianceDescription> {
        let p = self.project(project)?;
        p.story(story).ok_or_else(|| missing_story(project, story))?;
        p.descriptions
            .get(story)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("description of story {story}")))
    }

    /// Replaces the text of a story in any status; it returns to `Draft` and
    /// loses all derived outputs.
    pub fn edit_story(&self, project: &str, story: &str, text: &str, expected: Option<u64>) -> Result<ParseResult> {
        if text.trim().is_empty() {
            return Err(ServiceError::InvalidInput("story text is empty".into()));
        }
        self.mutate(project, expected, Actor::Developer, |p, _| {
            let s = p.story_mut(story).ok_or_else(|| missing_story(project, story))?;
            let parsed = s.replace_text(text.trim());
            let format = story::validate_format(s);
            p.set_diagnostics(story, format);
            p.clear_outputs(story);
            Ok(parsed)
        })
    }

    pub fn accept_correction(
        &self,
        project: &str,
        story: &str,
        accept: bool,
        expected: Option<u64>,
    ) -> Result<AcceptView> {
        self.mutate(project, expected, Actor::Developer, |p, _| {
            let mut proposal = p
                .proposals
                .get(story)
                .cloned()
                .ok_or_else(|| ServiceError::NotFound(format!("correction proposal for story {story}")))?;
            let view = apply_proposal(p, story, &mut proposal, accept)?;
            p.proposals.remove(story);
            Ok(view)
        })
    }

    pub fn run_stage(&self, project: &str, story: &str, stage: Stage, expected: Option<u64>) -> Result<StageOutcome> {
        self.mutate(project, expected, Actor::System, |p, e| {
            let s = p.story(story).ok_or_else(|| missing_story(project, story))?.clone();
            match stage {
                Stage::Normalize => {
                    if s.status() != StoryStatus::Draft {
                        return Err(wrong_state(&s, StoryStatus::Draft));
                    }
                    let mut proposal = e.normalizer.propose(&s)?;
                    if proposal.is_noop() {
                        let view = apply_proposal(p, story, &mut proposal, true)?;
                        p.proposals.remove(story);
                        return Ok(StageOutcome::Normalize {
                            proposal,
                            accepted: Some(view),
                        });
                    }
                    p.proposals.insert(story.to_string(), proposal.clone());
                    Ok(StageOutcome::Normalize {
                        proposal,
                        accepted: None,
                    })
                }
                Stage::Detect => {
                    let s = p.story_mut(story).expect("story exists");
                    let diags = e.detector.detect(s)?;
                    let status = s.status();
                    p.set_diagnostics(story, diags.clone());
                    Ok(StageOutcome::Detect {
                        status,
                        diagnostics: diags,
                    })
                }
                Stage::Map => {
                    if s.status() != StoryStatus::Resolved {
                        return Err(wrong_state(&s, StoryStatus::Resolved));
                    }
                    let mapping = kg::map_story(&s, e.kg.rules(), &e.kg)?;
                    p.mappings.insert(story.to_string(), mapping.clone());
                    Ok(StageOutcome::Map { mapping })
                }
                Stage::Describe => {
                    if s.status() != StoryStatus::Resolved {
                        return Err(wrong_state(&s, StoryStatus::Resolved));
                    }
                    if !ambiguity::gate_passes(&p.diagnostics_for(story)) {
                        return Err(ServiceError::WrongState {
                            story: story.to_string(),
                            actual: StoryStatus::AmbiguitiesPending,
                            required: StoryStatus::Resolved,
                        });
                    }
                    let mapping = match p.mappings.get(story) {
                        Some(m) if m.story_revision == s.revision() && m.kg_version == e.kg.version() => m.clone(),
                        _ => kg::map_story(&s, e.kg.rules(), &e.kg)?,
                    };
                    let s = p.story_mut(story).expect("story exists");
                    let description = describe::generate(s, &mapping, &e.kg)?;
                    p.mappings.insert(story.to_string(), mapping);
                    p.descriptions.insert(story.to_string(), description.clone());
                    Ok(StageOutcome::Describe {
                        description: AnnotatedDescription::from(&description),
                        notices: description.notices,
                    })
                }
                Stage::MatchCases => {
                    if s.status() != StoryStatus::Described {
                        return Err(wrong_state(&s, StoryStatus::Described));
                    }
                    let articles = p.mappings.get(story).map(|m| m.articles.clone()).unwrap_or_default();
                    let matches = e.cases.match_cases(&articles, DEFAULT_CASE_LIMIT);
                    p.case_matches.insert(story.to_string(), matches.clone());
                    Ok(StageOutcome::MatchCases {
                        dataset_version: e.cases.dataset_version().to_string(),
                        matches,
                    })
                }
            }
        })
    }

    /// Runs every stage the story is ready for, stopping at the first that
    /// needs a decision: missing elements, open findings, or a correction
    /// proposal when `accept_corrections` is off. Nothing is waived.
    pub fn run_all(&self, project: &str, story: &str, accept_corrections: bool) -> Result<StoryView> {
        loop {
            let view = self.story(project, story)?;
            if accept_corrections && view.proposal.is_some() {
                if self.accept_correction(project, story, true, None)?.status == StoryStatus::Draft {
                    return self.story(project, story);
                }
                continue;
            }
            let stage = match view.story.status() {
                StoryStatus::Draft if view.proposal.is_none() => Stage::Normalize,
                StoryStatus::Normalized => Stage::Detect,
                StoryStatus::Resolved => Stage::Describe,
                StoryStatus::Described if view.case_matches.is_none() => Stage::MatchCases,
                _ => return Ok(view),
            };
            match self.run_stage(project, story, stage, None)? {
                StageOutcome::Normalize { accepted: None, .. } if !accept_corrections => {
                    return self.story(project, story)
                }
                StageOutcome::Normalize {
                    accepted: Some(AcceptView {
                        status: StoryStatus::Draft,
                        ..
                    }),
                    ..
                } => return self.story(project, story),
                _ => {}
            }
        }
    }

    pub fn resolve(
        &self,
        project: &str,
        story: &str,
        diagnostic: &str,
        text: &str,
        expected: Option<u64>,
    ) -> Result<ResolveOutcome> {
        self.mutate(project, expected, Actor::Developer, |p, e| {
            let mut diags = p.diagnostics_for(story);
            let s = p.story_mut(story).ok_or_else(|| missing_story(project, story))?;
            let out = e
                .detector
                .resolve(s, &mut diags, &DiagnosticId(diagnostic.to_string()), text.trim())?;
            p.set_diagnostics(story, diags);
            p.clear_outputs(story);
            Ok(out)
        })
    }

    pub fn waive(
        &self,
        project: &str,
        story: &str,
        diagnostic: &str,
        note: &str,
        expected: Option<u64>,
    ) -> Result<Diagnostic> {
        self.mutate(project, expected, Actor::Developer, |p, _| {
            let mut diags = p.diagnostics_for(story);
            let s = p.story_mut(story).ok_or_else(|| missing_story(project, story))?;
            let waived = ambiguity::waive(s, &mut diags, &DiagnosticId(diagnostic.to_string()), note)?;
            p.set_diagnostics(story, diags);
            Ok(waived)
        })
    }

    // ---- survey ----

    /// Validates, scores and appends a response to the respondent's history.
    pub fn submit_survey(&self, response: SurveyResponse) -> Result<SurveyEntry> {
        if !is_safe_id(&response.respondent_id) {
            return Err(ServiceError::InvalidInput(format!(
                "respondent id {:?} must match [A-Za-z0-9_-]{{1,64}}",
                response.respondent_id
            )));
        }
        let e = self.engine();
        let score = survey::score(&response, &e.questionnaire)?;
        let lock = lock_for(&self.survey_locks, &response.respondent_id);
        let _guard = lock.lock().unwrap();
        let mut record = self
            .store
            .load_survey(&response.respondent_id)?
            .unwrap_or_else(|| SurveyRecord {
                respondent_id: response.respondent_id.clone(),
                entries: Vec::new(),
            });
        let entry = SurveyEntry { response, score };
        record.entries.push(entry.clone());
        self.store.save_survey(&record)?;
        Ok(entry)
    }

    pub fn attitude(&self, respondent: &str) -> Result<AttitudeReport> {
        let record = self
            .store
            .load_survey(respondent)?
            .ok_or_else(|| ServiceError::NotFound(format!("respondent {respondent}")))?;
        let last = |phase: Phase| record.entries.iter().rev().find(|x| x.response.phase == phase);
        let delta = match (last(Phase::Pre), last(Phase::Post)) {
            (Some(pre), Some(post)) => Some(survey::compare(&pre.score, &post.score)?),
            _ => None,
        };
        Ok(AttitudeReport {
            respondent_id: respondent.to_string(),
            latest: record.entries.last().cloned(),
            history: record.entries,
            delta,
        })
    }
}

fn apply_proposal(p: &mut Project, story: &str, proposal: &mut CorrectionProposal, accept: bool) -> Result<AcceptView> {
    let s = p.story_mut(story).ok_or_else(|| ServiceError::NotFound(format!("story {story}")))?;
    let out = normalize::accept_correction(s, proposal, accept)?;
    let format = story::validate_format(s);
    p.set_diagnostics(story, format);
    Ok(AcceptView {
        status: out.status,
        missing: out.missing.into_iter().collect(),
    })
}
