//! The `/v1` HTTP JSON API.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use storyguard_core::ambiguity::AmbiguityError;
use storyguard_core::describe::{render, AnnotatedDescription, Format};
use storyguard_core::kg::ArticleId;
use storyguard_core::normalize::NormalizeError;
use storyguard_core::survey::{Phase, SurveyResponse};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use crate::batch::StoryInput;
use crate::service::{Service, ServiceError, Stage};
use crate::views::{case_views, AttitudeView, EntryView};

pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": code, "message": message.into() }),
        }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.body[key] = value;
        self
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let msg = e.to_string();
        match &e {
            ServiceError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", msg),
            ServiceError::Conflict { expected, actual } => ApiError::new(StatusCode::CONFLICT, "conflict", msg)
                .with("expected_revision", json!(expected))
                .with("revision", json!(actual)),
            ServiceError::WrongState { story, actual, required } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "wrong_state", msg)
                    .with("story_id", json!(story))
                    .with("actual", json!(actual))
                    .with("required", json!(required))
            }
            ServiceError::EmptyBatch => ApiError::new(StatusCode::BAD_REQUEST, "empty_batch", msg),
            ServiceError::MalformedFile(_) => ApiError::new(StatusCode::BAD_REQUEST, "malformed_file", msg),
            ServiceError::InvalidInput(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", msg),
            ServiceError::Ambiguity(AmbiguityError::UnknownDiagnostic(_)) => {
                ApiError::new(StatusCode::NOT_FOUND, "not_found", msg)
            }
            ServiceError::Ambiguity(AmbiguityError::NotOpen(_)) => {
                ApiError::new(StatusCode::CONFLICT, "not_open", msg)
            }
            ServiceError::Normalize(NormalizeError::StaleProposal(_)) => {
                ApiError::new(StatusCode::CONFLICT, "stale_proposal", msg)
            }
            ServiceError::Store(_) | ServiceError::Engine(_) => {
                tracing::error!(error = %msg, "internal error");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg)
            }
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "rejected", msg),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;
type Shared = Arc<Service>;

/// Runs blocking service work (file i/o, outbound correction calls) off the
/// async executor.
async fn blocking<T, F>(svc: &Shared, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

fn ok<T: Serialize>(value: T) -> ApiResult {
    Ok(Json(value).into_response())
}

fn created<T: Serialize>(value: T) -> ApiResult {
    Ok((StatusCode::CREATED, Json(value)).into_response())
}

pub fn router(service: Shared, static_dir: Option<PathBuf>) -> Router {
    let story = "/v1/projects/:project/stories/:story";
    let api = Router::new()
        .route("/health", get(health))
        .route("/v1/health", get(health))
        .route("/v1/admin/reload", post(reload))
        .route("/v1/projects", get(list_projects).post(create_project))
        .route("/v1/projects/:project", get(get_project))
        .route("/v1/projects/:project/events", get(events))
        .route("/v1/projects/:project/stories", get(list_stories).post(import))
        .route(story, get(get_story).put(edit_story))
        .route(&format!("{story}/correction"), post(correction))
        .route(&format!("{story}/stages/:stage"), post(run_stage))
        .route(&format!("{story}/run"), post(run_all))
        .route(&format!("{story}/diagnostics"), get(diagnostics))
        .route(&format!("{story}/diagnostics/:diag/resolve"), post(resolve))
        .route(&format!("{story}/diagnostics/:diag/waive"), post(waive))
        .route(&format!("{story}/description"), get(description))
        .route(&format!("{story}/cases"), get(story_cases))
        .route("/v1/kg/query", get(kg_query))
        .route("/v1/cases/match", post(match_cases))
        .route("/v1/questionnaire", get(questionnaire))
        .route("/v1/survey/responses", post(submit_survey))
        .route("/v1/survey/respondents/:respondent", get(attitude))
        .with_state(service)
        .layer(TraceLayer::new_for_http());
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn health(State(svc): State<Shared>) -> ApiResult {
    let v = svc.versions();
    ok(json!({
        "status": "ok",
        "kg_version": v.kg_version,
        "dataset_version": v.dataset_version,
        "questionnaire_version": v.questionnaire_version,
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

async fn reload(State(svc): State<Shared>) -> ApiResult {
    ok(blocking(&svc, |s| s.reload()).await?)
}

#[derive(Deserialize)]
struct NewProject {
    name: String,
    #[serde(default)]
    id: Option<String>,
}

async fn create_project(State(svc): State<Shared>, body: Result<Json<NewProject>, JsonRejection>) -> ApiResult {
    let Json(b) = body?;
    created(blocking(&svc, move |s| s.create_project(&b.name, b.id.as_deref())).await?)
}

async fn list_projects(State(svc): State<Shared>) -> ApiResult {
    ok(blocking(&svc, |s| s.list_projects()).await?)
}

async fn get_project(State(svc): State<Shared>, Path(project): Path<String>) -> ApiResult {
    ok(blocking(&svc, move |s| s.project(&project)).await?)
}

async fn events(State(svc): State<Shared>, Path(project): Path<String>) -> ApiResult {
    ok(blocking(&svc, move |s| s.project(&project)).await?.events)
}

async fn list_stories(State(svc): State<Shared>, Path(project): Path<String>) -> ApiResult {
    let p = blocking(&svc, move |s| s.project(&project)).await?;
    ok(json!({ "revision": p.revision, "stories": p.stories }))
}

/// Exactly one of `text`, `stories` or `batch` (raw file contents).
#[derive(Deserialize)]
struct ImportBody {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    stories: Option<Vec<StoryInput>>,
    #[serde(default)]
    batch: Option<String>,
    #[serde(default)]
    expected_revision: Option<u64>,
}

async fn import(
    State(svc): State<Shared>,
    Path(project): Path<String>,
    body: Result<Json<ImportBody>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    let rev = b.expected_revision;
    let results = match (b.text, b.stories, b.batch) {
        (Some(text), None, None) => {
            let input = vec![StoryInput { id: b.id, text }];
            blocking(&svc, move |s| s.import_stories(&project, input, rev)).await?
        }
        (None, Some(stories), None) => blocking(&svc, move |s| s.import_stories(&project, stories, rev)).await?,
        (None, None, Some(batch)) => blocking(&svc, move |s| s.import_text(&project, &batch, rev)).await?,
        _ => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "bad_request",
                "give exactly one of text, stories or batch",
            ))
        }
    };
    created(results)
}

async fn get_story(State(svc): State<Shared>, Path((project, story)): Path<(String, String)>) -> ApiResult {
    ok(blocking(&svc, move |s| s.story(&project, &story)).await?)
}

#[derive(Deserialize)]
struct EditBody {
    text: String,
    expected_revision: u64,
}

async fn edit_story(
    State(svc): State<Shared>,
    Path((project, story)): Path<(String, String)>,
    body: Result<Json<EditBody>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    ok(blocking(&svc, move |s| s.edit_story(&project, &story, &b.text, Some(b.expected_revision))).await?)
}

#[derive(Deserialize)]
struct CorrectionBody {
    accept: bool,
    expected_revision: u64,
}

async fn correction(
    State(svc): State<Shared>,
    Path((project, story)): Path<(String, String)>,
    body: Result<Json<CorrectionBody>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    ok(blocking(&svc, move |s| s.accept_correction(&project, &story, b.accept, Some(b.expected_revision))).await?)
}

#[derive(Deserialize, Default)]
struct StageBody {
    #[serde(default)]
    expected_revision: Option<u64>,
}

async fn run_stage(
    State(svc): State<Shared>,
    Path((project, story, stage)): Path<(String, String, String)>,
    body: Option<Json<StageBody>>,
) -> ApiResult {
    let stage: Stage = stage
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::NOT_FOUND, "not_found", e))?;
    let rev = body.map(|Json(b)| b).unwrap_or_default().expected_revision;
    ok(blocking(&svc, move |s| s.run_stage(&project, &story, stage, rev)).await?)
}

#[derive(Deserialize, Default)]
struct RunBody {
    #[serde(default)]
    accept_corrections: bool,
}

async fn run_all(
    State(svc): State<Shared>,
    Path((project, story)): Path<(String, String)>,
    body: Option<Json<RunBody>>,
) -> ApiResult {
    let accept = body.map(|Json(b)| b).unwrap_or_default().accept_corrections;
    ok(blocking(&svc, move |s| s.run_all(&project, &story, accept)).await?)
}

async fn diagnostics(State(svc): State<Shared>, Path((project, story)): Path<(String, String)>) -> ApiResult {
    let view = blocking(&svc, move |s| s.story(&project, &story)).await?;
    ok(json!({ "revision": view.project_revision, "diagnostics": view.diagnostics }))
}

#[derive(Deserialize)]
struct ResolveBody {
    text: String,
    expected_revision: u64,
}

async fn resolve(
    State(svc): State<Shared>,
    Path((project, story, diag)): Path<(String, String, String)>,
    body: Result<Json<ResolveBody>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    ok(blocking(&svc, move |s| s.resolve(&project, &story, &diag, &b.text, Some(b.expected_revision))).await?)
}

#[derive(Deserialize)]
struct WaiveBody {
    note: String,
    expected_revision: u64,
}

async fn waive(
    State(svc): State<Shared>,
    Path((project, story, diag)): Path<(String, String, String)>,
    body: Result<Json<WaiveBody>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    ok(blocking(&svc, move |s| s.waive(&project, &story, &diag, &b.note, Some(b.expected_revision))).await?)
}

#[derive(Deserialize)]
struct FormatQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn description(
    State(svc): State<Shared>,
    Path((project, story)): Path<(String, String)>,
    Query(q): Query<FormatQuery>,
) -> ApiResult {
    let format = match q.format.as_deref() {
        None => Format::AnnotatedJson,
        Some(f) => f
            .parse()
            .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e))?,
    };
    let desc = blocking(&svc, move |s| s.description(&project, &story)).await?;
    match format {
        Format::AnnotatedJson => ok(AnnotatedDescription::from(&desc)),
        Format::PlainText => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], render(&desc, format)).into_response()),
        Format::Markdown => Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], render(&desc, format)).into_response()),
    }
}

async fn story_cases(State(svc): State<Shared>, Path((project, story)): Path<(String, String)>) -> ApiResult {
    let p = blocking(&svc, move |s| s.project(&project).map(|p| (p, story))).await?;
    let (p, story) = p;
    if p.story(&story).is_none() {
        return Err(ServiceError::NotFound(format!("story {story}")).into());
    }
    let matches = p
        .case_matches
        .get(&story)
        .ok_or_else(|| ServiceError::NotFound(format!("case matches of story {story}")))?;
    ok(json!({ "dataset_version": p.dataset_version, "matches": case_views(matches) }))
}

#[derive(Deserialize)]
struct PatternQuery {
    pattern: String,
}

async fn kg_query(State(svc): State<Shared>, Query(q): Query<PatternQuery>) -> ApiResult {
    let engine = svc.engine();
    let kg = &engine.kg;
    let pattern = kg
        .parse_pattern(&q.pattern)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_pattern", e.to_string()))?;
    let triples = kg
        .query(&pattern)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_pattern", e.to_string()))?;
    ok(json!({ "kg_version": kg.version(), "triples": triples }))
}

#[derive(Deserialize)]
struct MatchBody {
    articles: Vec<String>,
    #[serde(default)]
    limit: Option<usize>,
}

async fn match_cases(State(svc): State<Shared>, body: Result<Json<MatchBody>, JsonRejection>) -> ApiResult {
    let Json(b) = body?;
    let articles = b
        .articles
        .iter()
        .map(|a| a.parse::<ArticleId>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_article", e.to_string()))?;
    let engine = svc.engine();
    let matches = engine
        .cases
        .match_cases(&articles, b.limit.unwrap_or(crate::service::DEFAULT_CASE_LIMIT));
    ok(json!({ "dataset_version": engine.cases.dataset_version(), "matches": case_views(&matches) }))
}

async fn questionnaire(State(svc): State<Shared>) -> ApiResult {
    ok(svc.engine().questionnaire.clone())
}

#[derive(Deserialize)]
struct SurveyBody {
    respondent_id: String,
    phase: Phase,
    answers: std::collections::BTreeMap<String, i64>,
    #[serde(default)]
    timestamp: Option<DateTime<Utc>>,
}

async fn submit_survey(State(svc): State<Shared>, body: Result<Json<SurveyBody>, JsonRejection>) -> ApiResult {
    let Json(b) = body?;
    let response = SurveyResponse {
        respondent_id: b.respondent_id,
        timestamp: b.timestamp.unwrap_or_else(Utc::now),
        phase: b.phase,
        answers: b.answers,
    };
    let entry = blocking(&svc, move |s| s.submit_survey(response)).await?;
    created(EntryView::from(&entry))
}

async fn attitude(State(svc): State<Shared>, Path(respondent): Path<String>) -> ApiResult {
    let report = blocking(&svc, move |s| s.attitude(&respondent)).await?;
    ok(AttitudeView::from(&report))
}
