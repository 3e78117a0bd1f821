//! The immutable module data shared by every request: graph, lexicons, cases
//! and questionnaire.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use storyguard_core::ambiguity::{Detector, VagueTermLexicon, VerbLexicon};
use storyguard_core::cases::CaseRegistry;
use storyguard_core::data;
use storyguard_core::kg::KnowledgeGraph;
use storyguard_core::normalize::{CorrectionService, Normalizer, SpellLexicon};
use storyguard_core::survey::Questionnaire;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("data file {0} does not exist")]
    MissingDataFile(PathBuf),
    #[error("cannot read {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

/// Optional overrides for the compiled-in seed data.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataPaths {
    pub kg: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    /// Vague-term lexicon.
    pub lexicon: Option<PathBuf>,
    pub verbs: Option<PathBuf>,
    pub spelling: Option<PathBuf>,
    pub questionnaire: Option<PathBuf>,
}

pub struct Engine {
    pub kg: KnowledgeGraph,
    pub detector: Detector,
    pub normalizer: Normalizer,
    pub cases: CaseRegistry,
    pub questionnaire: Questionnaire,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("kg_version", &self.kg.version())
            .field("dataset_version", &self.cases.dataset_version())
            .field("questionnaire", &self.questionnaire.version)
            .finish()
    }
}

fn read(path: &Option<PathBuf>, seed: &'static str) -> Result<(String, PathBuf), EngineError> {
    match path {
        None => Ok((seed.to_string(), PathBuf::from("<seed>"))),
        Some(p) if !p.exists() => Err(EngineError::MissingDataFile(p.clone())),
        Some(p) => std::fs::read_to_string(p)
            .map(|s| (s, p.clone()))
            .map_err(|e| invalid(p, e)),
    }
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> EngineError {
    EngineError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl Engine {
    /// The compiled-in seed data.
    pub fn seed() -> Self {
        Self {
            kg: data::knowledge_graph(),
            detector: data::detector(),
            normalizer: data::normalizer(),
            cases: data::case_registry(),
            questionnaire: data::questionnaire(),
        }
    }

    pub fn load(paths: &DataPaths, correction: Option<Arc<dyn CorrectionService>>) -> Result<Self, EngineError> {
        let (src, p) = read(&paths.kg, data::KNOWLEDGE_GRAPH)?;
        let kg = KnowledgeGraph::load(&src).map_err(|e| invalid(&p, e))?;
        let (src, p) = read(&paths.lexicon, data::VAGUE_TERMS)?;
        let vague = VagueTermLexicon::from_json(&src).map_err(|e| invalid(&p, e))?;
        let (src, p) = read(&paths.verbs, data::VERBS)?;
        let verbs = VerbLexicon::from_json(&src).map_err(|e| invalid(&p, e))?;
        let (src, p) = read(&paths.spelling, data::SPELL_LEXICON)?;
        let spelling = SpellLexicon::from_text(&src).with_inflections();
        if spelling.is_empty() {
            return Err(invalid(&p, "spell lexicon is empty"));
        }
        let (src, p) = read(&paths.cases, data::CASES)?;
        let cases = CaseRegistry::ingest(&src).map_err(|e| invalid(&p, e))?;
        let (src, p) = read(&paths.questionnaire, data::QUESTIONNAIRE)?;
        let questionnaire = Questionnaire::from_json(&src).map_err(|e| invalid(&p, e))?;
        let mut normalizer = Normalizer::new(spelling);
        if let Some(service) = correction {
            normalizer = normalizer.with_service(service);
        }
        Ok(Self {
            kg,
            detector: Detector::new(vague, verbs),
            normalizer,
            cases,
            questionnaire,
        })
    }
}
