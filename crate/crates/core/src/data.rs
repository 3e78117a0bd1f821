//! Seed data compiled into the binary, used when no file path is configured.

use crate::ambiguity::{Detector, VagueTermLexicon, VerbLexicon};
use crate::cases::CaseRegistry;
use crate::kg::KnowledgeGraph;
use crate::normalize::{Normalizer, SpellLexicon};
use crate::survey::Questionnaire;

pub const KNOWLEDGE_GRAPH: &str = include_str!("../data/gdpr_kg.json");
pub const VAGUE_TERMS: &str = include_str!("../data/vague_terms.jsonl");
pub const VERBS: &str = include_str!("../data/verbs.json");
pub const SPELL_LEXICON: &str = include_str!("../data/spell_lexicon.txt");
pub const CASES: &str = include_str!("../data/cases.json");
pub const QUESTIONNAIRE: &str = include_str!("../data/questionnaire.json");

pub fn knowledge_graph() -> KnowledgeGraph {
    KnowledgeGraph::load(KNOWLEDGE_GRAPH).expect("seed graph is valid")
}

pub fn vague_terms() -> VagueTermLexicon {
    VagueTermLexicon::from_json(VAGUE_TERMS).expect("seed vague terms are valid")
}

pub fn verbs() -> VerbLexicon {
    VerbLexicon::from_json(VERBS).expect("seed verb lexicon is valid")
}

pub fn detector() -> Detector {
    Detector::new(vague_terms(), verbs())
}

pub fn spell_lexicon() -> SpellLexicon {
    SpellLexicon::from_text(SPELL_LEXICON).with_inflections()
}

pub fn normalizer() -> Normalizer {
    Normalizer::new(spell_lexicon())
}

pub fn case_registry() -> CaseRegistry {
    CaseRegistry::ingest(CASES).expect("seed cases are valid")
}

pub fn questionnaire() -> Questionnaire {
    Questionnaire::from_json(QUESTIONNAIRE).expect("seed questionnaire is valid")
}
