use std::sync::Arc;

use storyguard::batch::StoryInput;
use storyguard::project::Actor;
use storyguard::service::{Service, ServiceError, Stage, StageOutcome};
use storyguard::store::{FileStore, MemoryStore, ProjectStore};
use storyguard::Engine;
use storyguard_core::cases::EnforcementCase;
use storyguard_core::diagnostic::DiagnosticKind;
use storyguard_core::story::{Element, StoryStatus};

const PASSPORT: &str = "As a user, I want to upload my passport for identity verification so that my account can be trusted.";
const THEME: &str = "As a user, I want to change my UI theme so that the app looks better.";
const DOCTOR: &str = "As a doctor, I want to view my patient’s medical records so that I can comment on them.";

fn engine() -> Arc<Engine> {
    static ENGINE: std::sync::OnceLock<Arc<Engine>> = std::sync::OnceLock::new();
    ENGINE.get_or_init(|| Arc::new(Engine::seed())).clone()
}

fn svc() -> Service {
    Service::shared(engine(), Arc::new(MemoryStore::default()))
}

fn with_story(text: &str) -> Service {
    let s = svc();
    s.create_project("t", Some("p")).unwrap();
    s.import_stories("p", vec![StoryInput::new(Some("s"), text)], None).unwrap();
    s
}

/// Brute-force ranking: overlap by id-prefix, then fine, date and id.
fn oracle(cases: &[EnforcementCase], articles: &[&str], limit: usize) -> Vec<String> {
    let covers = |c: &EnforcementCase, a: &str| {
        c.violated_articles.iter().any(|v| {
            let v = v.to_string();
            a == v || a.starts_with(&format!("{v}("))
        })
    };
    let mut hits: Vec<(usize, &EnforcementCase)> = cases
        .iter()
        .map(|c| (articles.iter().filter(|a| covers(c, a)).count(), c))
        .filter(|(n, _)| *n > 0)
        .collect();
    hits.sort_by(|(na, a), (nb, b)| {
        nb.cmp(na)
            .then(b.fine_eur.cmp(&a.fine_eur))
            .then(b.date.cmp(&a.date))
            .then(a.id.cmp(&b.id))
    });
    hits.into_iter().take(limit).map(|(_, c)| c.id.clone()).collect()
}

#[test]
fn passport_happy_path() {
    let s = with_story(PASSPORT);
    let view = s.run_all("p", "s", false).unwrap();
    assert_eq!(view.story.status(), StoryStatus::Described);
    let desc = view.description.unwrap();
    let arts: Vec<String> = desc.sections.iter().map(|x| x.article.to_string()).collect();
    assert_eq!(arts, ["Art.4(1)", "Art.5(1)(b)"]);
    let engine = s.engine();
    let expected = oracle(
        engine.cases.cases(),
        &["Art.4(1)", "Art.5(1)(b)"],
        storyguard::service::DEFAULT_CASE_LIMIT,
    );
    let got: Vec<String> = view.case_matches.unwrap().iter().map(|m| m.case.id.clone()).collect();
    assert_eq!(got, expected);
    let p = s.project("p").unwrap();
    p.check().unwrap();
    let path: Vec<_> = p.events.iter().map(|e| (e.from, e.to, e.actor)).collect();
    assert_eq!(
        path,
        [
            (StoryStatus::Draft, StoryStatus::Normalized, Actor::System),
            (StoryStatus::Normalized, StoryStatus::Resolved, Actor::System),
            (StoryStatus::Resolved, StoryStatus::Described, Actor::System),
        ]
    );
    assert_eq!(p.kg_version, engine.kg.version());
    assert_eq!(p.mappings["s"].kg_version, engine.kg.version());
}

#[test]
fn describe_is_gated_on_open_findings() {
    let s = with_story(DOCTOR);
    s.run_stage("p", "s", Stage::Normalize, None).unwrap();
    s.run_stage("p", "s", Stage::Detect, None).unwrap();
    match s.run_stage("p", "s", Stage::Describe, None) {
        Err(ServiceError::WrongState { actual, required, .. }) => {
            assert_eq!(actual, StoryStatus::AmbiguitiesPending);
            assert_eq!(required, StoryStatus::Resolved);
        }
        other => panic!("{other:?}"),
    }
    // A failed stage leaves the project untouched.
    let before = s.project("p").unwrap();
    let _ = s.run_stage("p", "s", Stage::MatchCases, None);
    assert_eq!(s.project("p").unwrap(), before);
}

#[test]
fn theme_story_matches_no_cases() {
    let s = with_story(THEME);
    let view = s.run_all("p", "s", false).unwrap();
    assert!(view.description.unwrap().none_required);
    assert_eq!(view.case_matches, Some(vec![]));
}

#[test]
fn every_stage_names_its_required_status() {
    let s = with_story(PASSPORT);
    for stage in [Stage::Detect, Stage::Map, Stage::Describe, Stage::MatchCases] {
        match s.run_stage("p", "s", stage, None) {
            Err(ServiceError::WrongState { required, actual, .. }) => {
                assert_eq!(required, stage.required());
                assert_eq!(actual, StoryStatus::Draft);
            }
            other => panic!("{stage:?}: {other:?}"),
        }
    }
}

#[test]
fn import_errors_and_format_feedback() {
    let s = svc();
    s.create_project("t", Some("p")).unwrap();
    assert!(matches!(s.import_text("p", "  \n", None), Err(ServiceError::EmptyBatch)));
    assert!(matches!(s.import_text("p", "[{\"id\": 3}]", None), Err(ServiceError::MalformedFile(_))));
    assert!(matches!(
        s.import_text("p", r#"[{"id":"a","text":"x"},{"id":"a","text":"y"}]"#, None),
        Err(ServiceError::MalformedFile(_))
    ));
    assert!(matches!(
        s.import_text("missing", PASSPORT, None),
        Err(ServiceError::NotFound(_))
    ));
    assert_eq!(s.project("p").unwrap().revision, 0);

    let batch = format!("{PASSPORT}\n{THEME}\nAs a patient, I want to upload my blood test results.\n");
    let out = s.import_text("p", &batch, None).unwrap();
    assert_eq!(out.len(), 3);
    assert!(out[0].missing.is_empty() && out[1].missing.is_empty());
    assert_eq!(out[2].missing.iter().copied().collect::<Vec<_>>(), [Element::Why]);
    let p = s.project("p").unwrap();
    assert_eq!(p.revision, 1);
    assert!(p.stories.iter().all(|x| x.status() == StoryStatus::Draft));
    let ids: Vec<&str> = p.stories.iter().map(|x| x.id.as_str()).collect();
    assert_eq!(ids, ["s1", "s2", "s3"]);
    let f = p.diagnostics_for("s3");
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].kind, DiagnosticKind::FormatViolation);

    // Fixing the format by hand clears the finding; the story then normalizes.
    s.edit_story(
        "p",
        "s3",
        "As a patient, I want to upload my blood test results so that my doctor can review them.",
        Some(1),
    )
    .unwrap();
    assert!(s.project("p").unwrap().diagnostics_for("s3").is_empty());
    let out = s.run_stage("p", "s3", Stage::Normalize, None).unwrap();
    assert!(matches!(out, StageOutcome::Normalize { accepted: Some(ref v), .. } if v.status == StoryStatus::Normalized));
}

#[test]
fn correction_proposal_needs_a_decision() {
    let s = with_story("As a user, I want to delte my account so that my data is removed.");
    let out = s.run_stage("p", "s", Stage::Normalize, None).unwrap();
    let StageOutcome::Normalize { proposal, accepted: None } = out else {
        panic!("{out:?}")
    };
    assert!(!proposal.is_noop());
    let rev = s.project("p").unwrap().revision;
    // Rejecting keeps the text; the story waits for a manual edit.
    let v = s.accept_correction("p", "s", false, Some(rev)).unwrap();
    assert_eq!(v.status, StoryStatus::Draft);
    assert!(s.story("p", "s").unwrap().story.raw_text().contains("delte"));
    s.run_stage("p", "s", Stage::Normalize, None).unwrap();
    let v = s.accept_correction("p", "s", true, None).unwrap();
    assert_eq!(v.status, StoryStatus::Normalized);
    assert!(s.story("p", "s").unwrap().story.raw_text().contains("delete"));
    assert!(matches!(s.accept_correction("p", "s", true, None), Err(ServiceError::NotFound(_))));
}

#[test]
fn stale_revision_conflicts() {
    let s = with_story(DOCTOR);
    s.run_all("p", "s", false).unwrap();
    let view = s.story("p", "s").unwrap();
    let rev = view.project_revision;
    let id = view.diagnostics[0].id.0.clone();
    let refined = "As a doctor, I want to view my patient’s current prescription list within the clinic dashboard so that I can comment on them.";
    assert!(matches!(
        s.resolve("p", "s", &id, refined, Some(rev - 1)),
        Err(ServiceError::Conflict { expected, actual }) if expected == rev - 1 && actual == rev
    ));
    s.resolve("p", "s", &id, refined, Some(rev)).unwrap();
    assert!(matches!(
        s.waive("p", "s", &id, "note", Some(rev)),
        Err(ServiceError::Conflict { .. })
    ));
}

#[test]
fn resolve_then_describe() {
    let s = with_story(DOCTOR);
    s.run_all("p", "s", false).unwrap();
    let diags = s.story("p", "s").unwrap().diagnostics;
    let lexical = diags.iter().find(|d| d.kind == DiagnosticKind::Lexical).unwrap().id.0.clone();
    let out = s
        .resolve(
            "p",
            "s",
            &lexical,
            "As a doctor, I want to view my patient’s current prescription list within the clinic dashboard so that I can comment on them.",
            None,
        )
        .unwrap();
    assert_eq!(out.status, StoryStatus::Resolved);
    let view = s.run_all("p", "s", false).unwrap();
    assert_eq!(view.story.status(), StoryStatus::Described);
    s.project("p").unwrap().check().unwrap();
}

#[test]
fn waiving_opens_the_gate() {
    let s = with_story("As a delivery driver, I want to see user locations so that I can complete deliveries efficiently.");
    let view = s.run_all("p", "s", false).unwrap();
    assert_eq!(view.story.status(), StoryStatus::AmbiguitiesPending);
    let id = view.diagnostics[0].id.0.clone();
    assert!(s.waive("p", "s", &id, "  ", None).is_err());
    s.waive("p", "s", &id, "coarse area is enough", None).unwrap();
    let view = s.run_all("p", "s", false).unwrap();
    assert_eq!(view.story.status(), StoryStatus::Described);
    let arts: Vec<String> = view.mapping.unwrap().articles.iter().map(ToString::to_string).collect();
    assert_eq!(arts, ["Art.6", "Art.5(1)(c)"]);
}

#[test]
fn edit_resets_outputs() {
    let s = with_story(PASSPORT);
    s.run_all("p", "s", false).unwrap();
    s.edit_story("p", "s", THEME, None).unwrap();
    let view = s.story("p", "s").unwrap();
    assert_eq!(view.story.status(), StoryStatus::Draft);
    assert!(view.description.is_none() && view.mapping.is_none() && view.case_matches.is_none());
    let p = s.project("p").unwrap();
    p.check().unwrap();
    assert_eq!(p.events.last().unwrap().to, StoryStatus::Draft);
}

#[test]
fn file_store_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(FileStore::open(dir.path()).unwrap());
    let s = Service::shared(engine(), store.clone());
    s.create_project("t", Some("p")).unwrap();
    s.import_text("p", &format!("{PASSPORT}\n{DOCTOR}\n{THEME}\n"), None).unwrap();
    for id in ["s1", "s2", "s3"] {
        s.run_all("p", id, false).unwrap();
    }
    let loaded = store.load("p").unwrap().unwrap();
    let bytes = std::fs::read(dir.path().join("projects/p.json")).unwrap();
    assert_eq!(serde_json::to_vec_pretty(&loaded).unwrap(), bytes);
    // A fresh service over the same directory sees the same project.
    let again = Service::shared(engine(), Arc::new(FileStore::open(dir.path()).unwrap()));
    assert_eq!(again.project("p").unwrap(), loaded);
    assert_eq!(again.list_projects().unwrap().len(), 1);
}

#[test]
fn project_ids_are_checked() {
    let s = svc();
    assert!(matches!(s.create_project("x", Some("../x")), Err(ServiceError::InvalidInput(_))));
    assert!(matches!(s.create_project(" ", None), Err(ServiceError::InvalidInput(_))));
    let a = s.create_project("x", None).unwrap();
    let b = s.create_project("x", None).unwrap();
    assert_ne!(a.id, b.id);
    assert!(matches!(s.create_project("x", Some(&a.id)), Err(ServiceError::InvalidInput(_))));
}

#[test]
fn reload_rejects_bad_files_and_keeps_data() {
    let dir = tempfile::tempdir().unwrap();
    let kg = dir.path().join("kg.json");
    std::fs::write(&kg, storyguard_core::data::KNOWLEDGE_GRAPH).unwrap();
    let paths = storyguard::DataPaths {
        kg: Some(kg.clone()),
        ..Default::default()
    };
    let s = Service::from_paths(paths, None, Arc::new(MemoryStore::default())).unwrap();
    let v = s.versions().kg_version;
    std::fs::write(&kg, "{").unwrap();
    assert!(s.reload().is_err());
    assert_eq!(s.versions().kg_version, v);
    let bumped = storyguard_core::data::KNOWLEDGE_GRAPH.replacen(&v, "seed-next", 1);
    std::fs::write(&kg, bumped).unwrap();
    assert_eq!(s.reload().unwrap().kg_version, "seed-next");
}

#[test]
fn survey_history_and_delta() {
    use std::collections::BTreeMap;
    use storyguard_core::survey::{Phase, SurveyResponse};
    use storyguard_core::Rational64;
    let s = svc();
    let q = s.engine().questionnaire.clone();
    let answers = |v: i64| -> BTreeMap<String, i64> { q.questions.iter().map(|x| (x.id.clone(), v)).collect() };
    let resp = |phase, v| SurveyResponse {
        respondent_id: "dev-1".into(),
        timestamp: chrono::Utc::now(),
        phase,
        answers: answers(v),
    };
    assert!(matches!(s.attitude("dev-1"), Err(ServiceError::NotFound(_))));
    s.submit_survey(resp(Phase::Pre, 3)).unwrap();
    assert!(s.attitude("dev-1").unwrap().delta.is_none());
    s.submit_survey(resp(Phase::Post, 3)).unwrap();
    let r = s.attitude("dev-1").unwrap();
    assert_eq!(r.history.len(), 2);
    assert_eq!(r.delta.unwrap().overall, Rational64::from_integer(0));
    let mut bad = resp(Phase::Post, 3);
    bad.answers.insert("att-1".into(), 9);
    assert!(matches!(s.submit_survey(bad), Err(ServiceError::Survey(_))));
    let mut bad = resp(Phase::Post, 3);
    bad.respondent_id = "../../x".into();
    assert!(matches!(s.submit_survey(bad), Err(ServiceError::InvalidInput(_))));
    assert_eq!(s.attitude("dev-1").unwrap().history.len(), 2);
}
