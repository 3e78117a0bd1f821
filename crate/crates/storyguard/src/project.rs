//! The persisted project document.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use storyguard_core::describe::ComplianceDescription;
use storyguard_core::diagnostic::Diagnostic;
use storyguard_core::kg::StoryMapping;
use storyguard_core::normalize::CorrectionProposal;
use storyguard_core::story::{StoryId, StoryStatus, UserStory};
use storyguard_core::ExactCaseMatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Actor {
    System,
    Developer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineEvent {
    pub timestamp: DateTime<Utc>,
    pub project: String,
    pub story: StoryId,
    pub from: StoryStatus,
    pub to: StoryStatus,
    pub actor: Actor,
}

/// Per-story outputs are keyed by the story id string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub revision: u64,
    pub kg_version: String,
    pub dataset_version: String,
    pub stories: Vec<UserStory>,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default)]
    pub proposals: BTreeMap<String, CorrectionProposal>,
    #[serde(default)]
    pub mappings: BTreeMap<String, StoryMapping>,
    #[serde(default)]
    pub descriptions: BTreeMap<String, ComplianceDescription>,
    #[serde(default)]
    pub case_matches: BTreeMap<String, Vec<ExactCaseMatch>>,
    #[serde(default)]
    pub events: Vec<PipelineEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub id: String,
    pub name: String,
    pub revision: u64,
    pub kg_version: String,
    pub stories: usize,
    pub by_status: BTreeMap<StoryStatus, usize>,
}

impl Project {
    pub fn new(id: &str, name: &str, kg_version: &str, dataset_version: &str) -> Self {
        Self {
            id: id.to_string(),
            name: name.to_string(),
            created_at: Utc::now(),
            revision: 0,
            kg_version: kg_version.to_string(),
            dataset_version: dataset_version.to_string(),
            stories: Vec::new(),
            diagnostics: Vec::new(),
            proposals: BTreeMap::new(),
            mappings: BTreeMap::new(),
            descriptions: BTreeMap::new(),
            case_matches: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn summary(&self) -> ProjectSummary {
        let mut by_status = BTreeMap::new();
        for s in &self.stories {
            *by_status.entry(s.status()).or_insert(0) += 1;
        }
        ProjectSummary {
            id: self.id.clone(),
            name: self.name.clone(),
            revision: self.revision,
            kg_version: self.kg_version.clone(),
            stories: self.stories.len(),
            by_status,
        }
    }

    pub fn story(&self, id: &str) -> Option<&UserStory> {
        self.stories.iter().find(|s| s.id.as_str() == id)
    }

    pub fn story_mut(&mut self, id: &str) -> Option<&mut UserStory> {
        self.stories.iter_mut().find(|s| s.id.as_str() == id)
    }

    pub fn diagnostics_for(&self, id: &str) -> Vec<Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.story_id.as_str() == id)
            .cloned()
            .collect()
    }

    /// Swaps out the findings of one story, keeping the others in place.
    pub fn set_diagnostics(&mut self, id: &str, diags: Vec<Diagnostic>) {
        self.diagnostics.retain(|d| d.story_id.as_str() != id);
        self.diagnostics.extend(diags);
    }

    /// Drops every stage output derived from the story's text.
    pub fn clear_outputs(&mut self, id: &str) {
        self.proposals.remove(id);
        self.mappings.remove(id);
        self.descriptions.remove(id);
        self.case_matches.remove(id);
    }

    /// The document invariants; returns the first violation found.
    pub fn check(&self) -> Result<(), String> {
        let status: BTreeMap<&str, StoryStatus> = self.stories.iter().map(|s| (s.id.as_str(), s.status())).collect();
        let mut open: BTreeSet<&str> = BTreeSet::new();
        for d in &self.diagnostics {
            if !status.contains_key(d.story_id.as_str()) {
                return Err(format!("diagnostic {} references unknown story {}", d.id, d.story_id));
            }
            if d.is_open() {
                open.insert(d.story_id.as_str());
            }
        }
        for id in self.descriptions.keys() {
            if status.get(id.as_str()) != Some(&StoryStatus::Described) {
                return Err(format!("description for {id}, which is not Described"));
            }
        }
        for (id, s) in &status {
            if *s == StoryStatus::Described && open.contains(id) {
                return Err(format!("{id} is Described with an open diagnostic"));
            }
        }
        for e in &self.events {
            if !e.from.can_transition_to(e.to) {
                return Err(format!("illegal event {} -> {} on {}", e.from, e.to, e.story));
            }
        }
        Ok(())
    }
}
