//! Command-line front end. Every subcommand except `serve` runs in process
//! against an in-memory project, using the same service as the HTTP API.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use storyguard_core::describe::{render, AnnotatedDescription, Format};
use storyguard_core::diagnostic::Diagnostic;
use storyguard_core::kg::ArticleId;
use storyguard_core::normalize::{CorrectionService, CorrectionServiceConfig};
use storyguard_core::story::StoryStatus;
use storyguard_core::survey::{self, Phase, SurveyResponse};
use storyguard_core::ExactScore;

use crate::batch::StoryInput;
use crate::client::HttpCorrectionService;
use crate::engine::DataPaths;
use crate::service::{Service, ServiceError, Stage, StageOutcome, DEFAULT_CASE_LIMIT};
use crate::store::{FileStore, MemoryStore};
use crate::views::{case_views, CaseMatchView, ScoreView};

#[derive(Debug, Parser)]
#[command(name = "storyguard", version, about = "Privacy requirements analysis for user stories")]
pub struct Cli {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Data locations. Each flag falls back to its environment variable, then to
/// the seed data compiled into the binary.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding project and survey documents.
    #[arg(long, env = "STORYGUARD_DATA_DIR", default_value = "storyguard-data", global = true)]
    pub data_dir: PathBuf,
    /// Knowledge graph file.
    #[arg(long, env = "STORYGUARD_KG", global = true)]
    pub kg: Option<PathBuf>,
    /// Enforcement case dataset.
    #[arg(long, env = "STORYGUARD_CASES", global = true)]
    pub cases: Option<PathBuf>,
    /// Vague-term lexicon.
    #[arg(long, env = "STORYGUARD_LEXICON", global = true)]
    pub lexicon: Option<PathBuf>,
    /// Verb lexicon used by the coordination and access detectors.
    #[arg(long, env = "STORYGUARD_VERBS", global = true)]
    pub verbs: Option<PathBuf>,
    /// Spelling word list, one word per line.
    #[arg(long, env = "STORYGUARD_SPELLING", global = true)]
    pub spelling: Option<PathBuf>,
    #[arg(long, env = "STORYGUARD_QUESTIONNAIRE", global = true)]
    pub questionnaire: Option<PathBuf>,
    /// External correction service; the built-in rule engine is used without it.
    #[arg(long, env = "STORYGUARD_CORRECTION_ENDPOINT", global = true)]
    pub correction_endpoint: Option<String>,
    #[arg(long, env = "STORYGUARD_CORRECTION_TIMEOUT_MS", default_value_t = 5000, global = true)]
    pub correction_timeout_ms: u64,
}

impl DataArgs {
    pub fn paths(&self) -> DataPaths {
        DataPaths {
            kg: self.kg.clone(),
            cases: self.cases.clone(),
            lexicon: self.lexicon.clone(),
            verbs: self.verbs.clone(),
            spelling: self.spelling.clone(),
            questionnaire: self.questionnaire.clone(),
        }
    }

    pub fn correction(&self) -> anyhow::Result<Option<Arc<dyn CorrectionService>>> {
        let Some(endpoint) = &self.correction_endpoint else {
            return Ok(None);
        };
        let cfg = CorrectionServiceConfig {
            endpoint: endpoint.clone(),
            timeout_ms: self.correction_timeout_ms,
            enabled: true,
        };
        cfg.validate()?;
        Ok(Some(Arc::new(HttpCorrectionService::new(&cfg))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Markdown,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check stories; exits 1 when any finding is open.
    Lint {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the whole pipeline, accepting corrections and waiving nothing.
    Describe {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        format: OutputFormat,
    },
    Kg {
        #[command(subcommand)]
        command: KgCommand,
    },
    Cases {
        #[command(subcommand)]
        command: CasesCommand,
    },
    Survey {
        #[command(subcommand)]
        command: SurveyCommand,
    },
    /// Start the HTTP API.
    Serve {
        #[arg(long, env = "STORYGUARD_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "STORYGUARD_HOST", default_value = "127.0.0.1")]
        host: String,
        /// Static files served at `/` (e.g. a built web client).
        #[arg(long, env = "STORYGUARD_STATIC_DIR")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum KgCommand {
    /// Pattern of three terms, `?` for a wildcard: `delete_account requires_compliance ?`.
    Query {
        pattern: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum CasesCommand {
    /// Comma-separated article ids: `Art.6,Art.5(1)(c)`.
    Match {
        articles: String,
        #[arg(long, default_value_t = DEFAULT_CASE_LIMIT)]
        limit: usize,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum SurveyCommand {
    /// Score a response file; with `--pre`, also the change from a baseline.
    Score {
        file: PathBuf,
        #[arg(long)]
        pre: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn service(data: &DataArgs) -> anyhow::Result<Service> {
    Ok(Service::from_paths(data.paths(), data.correction()?, Arc::new(MemoryStore::default()))?)
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Imports a batch file, then moves every story into its own scratch project
/// so each pipeline call touches a one-story document instead of the batch.
fn import(svc: &Service, file: &Path) -> anyhow::Result<Vec<(String, String)>> {
    svc.create_project("cli", Some("cli"))?;
    let results = svc.import_text("cli", &read(file)?, None)?;
    let mut out = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        let project = format!("cli-{i}");
        svc.create_project(&project, Some(&project))?;
        let input = StoryInput::new(Some(r.story.id.as_str()), r.story.raw_text());
        svc.import_stories(&project, vec![input], None)?;
        out.push((project, r.story.id.0));
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LintReport {
    pub story_id: String,
    pub status: StoryStatus,
    pub text: String,
    pub corrected: bool,
    pub diagnostics: Vec<Diagnostic>,
}

fn lint(data: &DataArgs, file: &Path, json: bool, out: &mut dyn Write) -> anyhow::Result<i32> {
    let svc = service(data)?;
    let ids = import(&svc, file)?;
    let mut reports = Vec::with_capacity(ids.len());
    for (project, id) in ids {
        let p = project.as_str();
        let mut corrected = false;
        if let StageOutcome::Normalize { accepted: None, .. } = svc.run_stage(p, &id, Stage::Normalize, None)? {
            corrected = svc.accept_correction(p, &id, true, None)?.status != StoryStatus::Draft;
        }
        let story = svc.story(p, &id)?.story;
        if story.status() == StoryStatus::Normalized {
            svc.run_stage(p, &id, Stage::Detect, None)?;
        }
        let view = svc.story(p, &id)?;
        reports.push(LintReport {
            story_id: id,
            status: view.story.status(),
            text: view.story.raw_text().to_string(),
            corrected,
            diagnostics: view.diagnostics,
        });
    }
    let open: usize = reports
        .iter()
        .map(|r| r.diagnostics.iter().filter(|d| d.is_open()).count())
        .sum();
    if json {
        serde_json::to_writer_pretty(&mut *out, &reports)?;
        writeln!(out)?;
    } else {
        for r in &reports {
            let note = if r.corrected { " (corrected)" } else { "" };
            writeln!(out, "{}: {}{note}", r.story_id, r.status)?;
            for d in &r.diagnostics {
                writeln!(out, "  {} {} {} {:?}: {}", d.id, d.kind, d.span, d.matched_text, d.message)?;
            }
        }
        writeln!(out, "{} stories, {open} open findings", reports.len())?;
    }
    Ok(i32::from(open > 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescribeOutcome {
    Described,
    NoneRequired,
    SkippedAmbiguous,
    SkippedFormat,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DescribeReport {
    pub story_id: String,
    pub status: StoryStatus,
    pub outcome: DescribeOutcome,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<AnnotatedDescription>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<CaseMatchView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub open_diagnostics: Vec<Diagnostic>,
}

fn describe(data: &DataArgs, file: &Path, format: OutputFormat, out: &mut dyn Write) -> anyhow::Result<i32> {
    let svc = service(data)?;
    let ids = import(&svc, file)?;
    let mut reports = Vec::with_capacity(ids.len());
    let mut rendered = Vec::with_capacity(ids.len());
    for (project, id) in ids {
        let view = svc.run_all(&project, &id, true)?;
        let open: Vec<Diagnostic> = view.diagnostics.iter().filter(|d| d.is_open()).cloned().collect();
        let (outcome, text) = match view.story.status() {
            StoryStatus::Described => {
                let desc = svc.description(&project, &id)?;
                let fmt = if format == OutputFormat::Markdown { Format::Markdown } else { Format::PlainText };
                let outcome = if desc.none_required {
                    DescribeOutcome::NoneRequired
                } else {
                    DescribeOutcome::Described
                };
                (outcome, render(&desc, fmt))
            }
            StoryStatus::AmbiguitiesPending => {
                let list: Vec<String> = open
                    .iter()
                    .map(|d| format!("  {} {} {:?}: {}", d.id, d.kind, d.matched_text, d.message))
                    .collect();
                (
                    DescribeOutcome::SkippedAmbiguous,
                    format!("skipped: {} open ambiguity findings\n{}", open.len(), list.join("\n")),
                )
            }
            _ => {
                let missing: Vec<&str> = view.story.missing().iter().map(|e| e.name()).collect();
                (
                    DescribeOutcome::SkippedFormat,
                    format!("skipped: missing or malformed {}", missing.join(", ")),
                )
            }
        };
        let cases = view.case_matches.as_deref().map(case_views).unwrap_or_default();
        rendered.push((id.clone(), text, cases.clone()));
        reports.push(DescribeReport {
            story_id: id,
            status: view.story.status(),
            outcome,
            text: view.story.raw_text().to_string(),
            description: view.description,
            cases,
            open_diagnostics: open,
        });
    }
    if format == OutputFormat::Json {
        serde_json::to_writer_pretty(&mut *out, &reports)?;
        writeln!(out)?;
        return Ok(0);
    }
    for (id, text, cases) in rendered {
        writeln!(out, "== {id} ==")?;
        writeln!(out, "{text}")?;
        if !cases.is_empty() {
            writeln!(out, "Related enforcement cases:")?;
            for c in cases {
                writeln!(
                    out,
                    "  {} {} ({}) EUR {} on {}, score {}",
                    c.case.id, c.case.controller, c.case.authority, c.case.fine_eur, c.case.date, c.score.exact
                )?;
            }
        }
        writeln!(out)?;
    }
    Ok(0)
}

fn kg_query(data: &DataArgs, pattern: &str, json: bool, out: &mut dyn Write) -> anyhow::Result<i32> {
    let svc = service(data)?;
    let engine = svc.engine();
    let p = engine.kg.parse_pattern(pattern)?;
    let triples = engine.kg.query(&p)?;
    if json {
        serde_json::to_writer_pretty(&mut *out, &serde_json::json!({ "kg_version": engine.kg.version(), "triples": triples }))?;
        writeln!(out)?;
    } else {
        for t in &triples {
            writeln!(out, "{} {} {}", t.subject.id, t.predicate, t.object.id)?;
        }
    }
    Ok(0)
}

fn cases_match(data: &DataArgs, articles: &str, limit: usize, json: bool, out: &mut dyn Write) -> anyhow::Result<i32> {
    let ids = articles
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse::<ArticleId>)
        .collect::<Result<Vec<_>, _>>()?;
    if ids.is_empty() {
        bail!("no article ids given");
    }
    let svc = service(data)?;
    let engine = svc.engine();
    let matches = case_views(&engine.cases.match_cases(&ids, limit));
    if json {
        serde_json::to_writer_pretty(
            &mut *out,
            &serde_json::json!({ "dataset_version": engine.cases.dataset_version(), "matches": matches }),
        )?;
        writeln!(out)?;
    } else {
        for m in &matches {
            let overlap: Vec<String> = m.overlap.iter().map(ToString::to_string).collect();
            writeln!(
                out,
                "{} {} EUR {} {} [{}] score {} {}",
                m.case.id,
                m.case.controller,
                m.case.fine_eur,
                m.case.date,
                overlap.join(", "),
                m.score.exact,
                m.case.source_url
            )?;
        }
        if matches.is_empty() {
            writeln!(out, "no matching cases")?;
        }
    }
    Ok(0)
}

/// A response file; `timestamp` may be left out.
#[derive(Debug, Deserialize)]
struct ResponseFile {
    respondent_id: String,
    phase: Phase,
    answers: std::collections::BTreeMap<String, i64>,
    #[serde(default)]
    timestamp: Option<chrono::DateTime<chrono::Utc>>,
}

fn read_response(path: &Path) -> anyhow::Result<SurveyResponse> {
    let f: ResponseFile =
        serde_json::from_str(&read(path)?).with_context(|| format!("{} is not a survey response", path.display()))?;
    Ok(SurveyResponse {
        respondent_id: f.respondent_id,
        timestamp: f.timestamp.unwrap_or_else(chrono::Utc::now),
        phase: f.phase,
        answers: f.answers,
    })
}

fn write_score(out: &mut dyn Write, label: &str, v: &ScoreView) -> std::io::Result<()> {
    writeln!(out, "{label} (questionnaire {})", v.questionnaire_version)?;
    for (c, r) in &v.per_component {
        writeln!(out, "  {c:?}: {} ({})", r.exact, r.value)?;
    }
    writeln!(out, "  overall: {} ({})", v.overall.exact, v.overall.value)
}

fn survey_score(data: &DataArgs, file: &Path, pre: Option<&Path>, json: bool, out: &mut dyn Write) -> anyhow::Result<i32> {
    let svc = service(data)?;
    let q = &svc.engine().questionnaire;
    let post = read_response(file)?;
    let post_score: ExactScore = survey::score(&post, q)?;
    let post_view = ScoreView::from(&post_score);
    let delta = match pre {
        Some(p) => {
            let pre_score: ExactScore = survey::score(&read_response(p)?, q)?;
            Some(ScoreView::from(&survey::compare(&pre_score, &post_score)?))
        }
        None => None,
    };
    if json {
        serde_json::to_writer_pretty(&mut *out, &serde_json::json!({ "score": post_view, "delta": delta }))?;
        writeln!(out)?;
    } else {
        write_score(out, "score", &post_view)?;
        if let Some(d) = &delta {
            write_score(out, "change from baseline", d)?;
        }
    }
    Ok(0)
}

/// Runs a non-serving subcommand, writing its report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    let data = &cli.data;
    match &cli.command {
        Command::Lint { file, json } => lint(data, file, *json, out),
        Command::Describe { file, format } => describe(data, file, *format, out),
        Command::Kg {
            command: KgCommand::Query { pattern, json },
        } => kg_query(data, pattern, *json, out),
        Command::Cases {
            command: CasesCommand::Match { articles, limit, json },
        } => cases_match(data, articles, *limit, *json, out),
        Command::Survey {
            command: SurveyCommand::Score { file, pre, json },
        } => survey_score(data, file, pre.as_deref(), *json, out),
        Command::Serve { .. } => bail!("serve is not a one-shot command"),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

pub async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, ServeError> {
    tokio::net::TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            ServeError::PortInUse(addr.port())
        } else {
            ServeError::Io(e)
        }
    })
}

pub async fn serve(data: &DataArgs, host: &str, port: u16, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let store = Arc::new(FileStore::open(&data.data_dir)?);
    let svc = Service::from_paths(data.paths(), data.correction()?, store)?;
    let addr: SocketAddr = format!("{host}:{port}").parse().context("invalid host or port")?;
    let listener = bind(addr).await?;
    let versions = svc.versions();
    tracing::info!(
        addr = %listener.local_addr()?,
        kg = versions.kg_version,
        cases = versions.dataset_version,
        data_dir = %data.data_dir.display(),
        "listening"
    );
    let app = crate::api::router(Arc::new(svc), static_dir);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
