use storyguard_core::data;
use storyguard_core::kg::{ArticleId, EntityKind};
use storyguard_core::survey::Component;

#[test]
fn graph_covers_the_core_articles() {
    let kg = data::knowledge_graph();
    for a in ["Art.4(1)", "Art.5(1)(a)", "Art.5(1)(b)", "Art.5(1)(c)", "Art.6", "Art.7", "Art.17", "Art.25", "Art.32"] {
        let id: ArticleId = a.parse().unwrap();
        let info = kg.article(&id).unwrap_or_else(|| panic!("{a} missing"));
        assert!(!info.obligations.is_empty());
        assert!((2..=5).contains(&info.obligations.len()), "{a}");
    }
    assert_eq!(kg.article(&"Art.4(1)".parse().unwrap()).unwrap().title, "definition of personal data");
    assert!(kg.article(&"Art.17".parse().unwrap()).unwrap().title.contains("Right to Erasure"));
    for rule in kg.rules() {
        let e = kg.entity(rule.entity.as_deref().unwrap()).unwrap();
        assert!(matches!(e.kind, EntityKind::Action | EntityKind::DataEntity));
    }
}

#[test]
fn vague_terms_leave_refinements_alone() {
    let lex = data::vague_terms();
    assert!((55..=80).contains(&lex.len()));
    let phrases: Vec<&str> = lex.entries().iter().map(|e| e.phrase.as_str()).collect();
    for required in ["personal information", "user data", "user locations", "medical records", "relevant data", "necessary details"] {
        assert!(phrases.contains(&required), "{required}");
    }
    for text in [
        "my data is removed",
        "complete deliveries efficiently",
        "current prescription list and allergy information",
        "access users’ real-time GPS coordinates during delivery hours",
        "upload my passport for identity verification",
        "change my UI theme so that the app looks better",
    ] {
        assert!(lex.find_all(text).is_empty(), "{text}");
    }
}

#[test]
fn cases_meet_the_starter_bar() {
    let reg = data::case_registry();
    assert!(reg.len() >= 20);
    assert!(!reg.dataset_version().is_empty());
    let openai = reg.cases().iter().find(|c| c.controller == "OpenAI").unwrap();
    assert_eq!(openai.fine_eur, 15_000_000);
    assert_eq!(openai.date.to_string(), "2024-12-20");
    assert!(openai.violated_articles.contains(&"Art.6".parse().unwrap()));
}

#[test]
fn questionnaire_has_each_component() {
    let q = data::questionnaire();
    assert_eq!(q.version, "tpb-1");
    for c in Component::ALL {
        assert!(q.questions.iter().any(|x| x.component == c));
    }
    assert!(q.questions.iter().any(|x| x.reverse_scored));
}

#[test]
fn lexicon_and_detector_load() {
    assert!(data::spell_lexicon().len() > 1000);
    assert!(data::spell_lexicon().contains("user"));
    let d = data::detector();
    assert!(!d.verb_lexicon().access_verbs.is_empty());
}
