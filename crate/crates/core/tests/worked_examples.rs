//! The worked examples, run through the shipped seed data.

use storyguard_core::ambiguity::{waive, Resolution};
use storyguard_core::data;
use storyguard_core::describe::{generate, render, Format, Tag, NONE_REQUIRED};
use storyguard_core::diagnostic::{Diagnostic, DiagnosticKind};
use storyguard_core::kg::{map_story, ArticleId};
use storyguard_core::normalize::accept_correction;
use storyguard_core::story::{parse_story, validate_format, Element, StoryStatus, UserStory};

const REGISTRATION: &str = "As a user, I want to register an account on the system by providing my personal information, so that I can use the platform.";
const DRIVER_VAGUE: &str = "As a delivery driver, I want to see user locations so that I can complete deliveries efficiently.";
const DRIVER_REFINED: &str = "As a delivery driver, I want to access users’ real-time GPS coordinates during delivery hours so that I can complete deliveries efficiently.";
const PASSPORT: &str = "As a user, I want to upload my passport for identity verification so that my account can be trusted.";
const DELETE: &str = "As a user, I want to delete my account so that my data is removed.";
const THEME: &str = "As a user, I want to change my UI theme so that the app looks better.";
const PATIENT: &str = "As a patient, I need to be able to enter my current medical records and personal information, and previous medical records can be edited so that I can keep my profile up-to-date.";
const DOCTOR: &str = "As a doctor, I want to view my patient’s medical records so that I can comment on them.";

fn ids(xs: &[ArticleId]) -> Vec<String> {
    xs.iter().map(|a| a.to_string()).collect()
}

/// Draft → Normalized through the rule engine, asserting it changes nothing.
fn normalized(text: &str) -> UserStory {
    let mut s = parse_story("s1", text).story;
    let mut p = data::normalizer().propose(&s).unwrap();
    assert!(p.is_noop(), "{text}: {:?}", p.edits);
    let out = accept_correction(&mut s, &mut p, true).unwrap();
    assert_eq!(out.status, StoryStatus::Normalized);
    s
}

fn detected(text: &str) -> (UserStory, Vec<Diagnostic>) {
    let mut s = normalized(text);
    let d = data::detector().detect(&mut s).unwrap();
    (s, d)
}

#[test]
fn registration_story_parses() {
    let r = parse_story("r", REGISTRATION);
    assert!(r.missing.is_empty());
    let s = &r.story;
    assert_eq!(s.who().unwrap().text, "user");
    assert_eq!(s.what().unwrap().text, "register an account on the system by providing my personal information");
    assert_eq!(s.why().unwrap().text, "I can use the platform");
    assert!(validate_format(s).is_empty());
}

#[test]
fn missing_why_and_malformed_what() {
    let r = parse_story("r", "As a patient, I want to upload my blood test results.");
    assert_eq!(r.missing.into_iter().collect::<Vec<_>>(), vec![Element::Why]);
    let s = parse_story("r", "I want search").story;
    assert_eq!(validate_format(&s).len(), 3);
}

#[test]
fn spelling_fix_with_shipped_lexicon() {
    let mut s = parse_story("s", "As a user, I want to delte my account so that my data is removed.").story;
    let mut p = data::normalizer().propose(&s).unwrap();
    assert_eq!(p.corrected, DELETE);
    accept_correction(&mut s, &mut p, true).unwrap();
    assert_eq!(s.status(), StoryStatus::Normalized);
}

#[test]
fn delivery_driver_pair() {
    let kg = data::knowledge_graph();
    let (mut vague, diags) = detected(DRIVER_VAGUE);
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].kind, DiagnosticKind::Lexical);
    assert_eq!(diags[0].matched_text, "user locations");
    assert_eq!(vague.status(), StoryStatus::AmbiguitiesPending);

    // Waived, the vague story maps to the general articles only.
    let mut diags = diags;
    let id = diags[0].id.clone();
    waive(&mut vague, &mut diags, &id, "accepted for the comparison").unwrap();
    let m = map_story(&vague, kg.rules(), &kg).unwrap();
    assert_eq!(ids(&m.articles), ["Art.6", "Art.5(1)(c)"]);

    let (refined, diags) = detected(DRIVER_REFINED);
    assert!(diags.is_empty(), "{diags:?}");
    assert_eq!(refined.status(), StoryStatus::Resolved);
    let m = map_story(&refined, kg.rules(), &kg).unwrap();
    for a in ["Art.6", "Art.5(1)(c)", "Art.4(1)", "Art.25"] {
        assert!(ids(&m.articles).contains(&a.to_string()), "{a}");
    }
}

#[test]
fn passport_story_described() {
    let kg = data::knowledge_graph();
    let (mut s, diags) = detected(PASSPORT);
    assert!(diags.is_empty(), "{diags:?}");
    let m = map_story(&s, kg.rules(), &kg).unwrap();
    assert_eq!(ids(&m.articles), ["Art.4(1)", "Art.5(1)(b)"]);
    assert!(m.triples.iter().any(|t| t.subject.id == "passport"));
    assert!(m.triples.iter().any(|t| t.subject.id == "personal_data" && t.object.id == "Art.4(1)"));
    let d = generate(&mut s, &m, &kg).unwrap();
    assert_eq!(s.status(), StoryStatus::Described);
    let art4 = &d.sections[0];
    assert!(art4.segments.iter().any(|x| x.tag == Tag::Source && x.text == "Art.4(1) — definition of personal data"));
    assert!(art4.segments.iter().any(|x| x.tag == Tag::How && x.text.contains("passport")));
    assert!(art4.segments[0].text.starts_with("This user story involves the processing of personal data"));
}

#[test]
fn delete_account_maps_to_erasure() {
    let kg = data::knowledge_graph();
    let (mut s, diags) = detected(DELETE);
    assert!(diags.is_empty());
    let m = map_story(&s, kg.rules(), &kg).unwrap();
    assert_eq!(ids(&m.articles), ["Art.17"]);
    let d = generate(&mut s, &m, &kg).unwrap();
    assert_eq!(d.sections.len(), 1);
    assert!(d.sections[0].segments.iter().any(|x| x.tag == Tag::Source && x.text.contains("Right to Erasure")));
    let q = kg.parse_pattern("delete_account requires_compliance ?").unwrap();
    assert_eq!(kg.query(&q).unwrap()[0].object.id, "Art.17");
}

#[test]
fn theme_change_needs_nothing() {
    let kg = data::knowledge_graph();
    let (mut s, diags) = detected(THEME);
    assert!(diags.is_empty());
    let m = map_story(&s, kg.rules(), &kg).unwrap();
    assert!(m.articles.is_empty());
    let d = generate(&mut s, &m, &kg).unwrap();
    assert!(d.none_required);
    assert_eq!(render(&d, Format::PlainText), NONE_REQUIRED);
}

#[test]
fn patient_coordination_is_syntactic() {
    let (_, diags) = detected(PATIENT);
    let syn: Vec<_> = diags.iter().filter(|d| d.kind == DiagnosticKind::Syntactic).collect();
    assert_eq!(syn.len(), 1);
    assert_eq!(syn[0].matched_text, ", and previous medical records can be edited");
}

#[test]
fn doctor_story_refined() {
    let d = data::detector();
    let (mut s, mut diags) = detected(DOCTOR);
    let kinds: Vec<_> = diags.iter().map(|x| (x.kind, x.matched_text.as_str())).collect();
    assert_eq!(kinds, [(DiagnosticKind::Lexical, "medical records"), (DiagnosticKind::Pragmatic, "view")]);
    let lexical = diags[0].id.clone();
    let out = d
        .resolve(
            &mut s,
            &mut diags,
            &lexical,
            "As a doctor, I want to view my patient’s current prescription list and allergy information so that I can comment on them.",
        )
        .unwrap();
    assert_eq!(out.resolution, Resolution::Resolved);
    assert!(!diags.iter().any(|x| x.is_open() && x.kind == DiagnosticKind::Lexical));
    // The channel is still unstated.
    assert!(diags.iter().any(|x| x.is_open() && x.kind == DiagnosticKind::Pragmatic));
    let pragmatic = diags.iter().find(|x| x.is_open()).unwrap().id.clone();
    let out = d
        .resolve(
            &mut s,
            &mut diags,
            &pragmatic,
            "As a doctor, I want to view my patient’s current prescription list and allergy information within the clinic dashboard so that I can comment on them.",
        )
        .unwrap();
    assert_eq!(out.resolution, Resolution::Resolved);
    assert_eq!(s.status(), StoryStatus::Resolved);
}
