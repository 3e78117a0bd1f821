//! Project and survey persistence: one JSON document per project (and per
//! respondent) in a data directory, written by atomic rename.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use storyguard_core::survey::SurveyResponse;
use storyguard_core::ExactScore;

use crate::project::Project;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt document {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyEntry {
    pub response: SurveyResponse,
    pub score: ExactScore,
}

/// Every scored response of one respondent, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub respondent_id: String,
    pub entries: Vec<SurveyEntry>,
}

pub trait ProjectStore: Send + Sync {
    fn load(&self, id: &str) -> Result<Option<Project>, StoreError>;
    fn save(&self, project: &Project) -> Result<(), StoreError>;
    fn list(&self) -> Result<Vec<Project>, StoreError>;
    fn load_survey(&self, respondent: &str) -> Result<Option<SurveyRecord>, StoreError>;
    fn save_survey(&self, record: &SurveyRecord) -> Result<(), StoreError>;
}

/// Ids used as file names are limited to `[A-Za-z0-9_-]`, 1 to 64 chars.
pub fn is_safe_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["projects", "surveys"] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir, source })?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn project_path(&self, id: &str) -> PathBuf {
        self.root.join("projects").join(format!("{id}.json"))
    }

    fn survey_path(&self, id: &str) -> PathBuf {
        self.root.join("surveys").join(format!("{id}.json"))
    }

    fn read<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, StoreError> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => {
                return Err(StoreError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        serde_json::from_slice(&bytes).map(Some).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    fn write<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
        let io = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let dir = path.parent().expect("store paths have a parent");
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        let bytes = serde_json::to_vec_pretty(value).expect("documents serialize");
        tmp.write_all(&bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }
}

impl ProjectStore for FileStore {
    fn load(&self, id: &str) -> Result<Option<Project>, StoreError> {
        if !is_safe_id(id) {
            return Ok(None);
        }
        Self::read(&self.project_path(id))
    }

    fn save(&self, project: &Project) -> Result<(), StoreError> {
        Self::write(&self.project_path(&project.id), project)
    }

    fn list(&self) -> Result<Vec<Project>, StoreError> {
        let dir = self.root.join("projects");
        let entries = std::fs::read_dir(&dir).map_err(|source| StoreError::Io { path: dir, source })?;
        let mut out = Vec::new();
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(p) = Self::read::<Project>(&path)? {
                    out.push(p);
                }
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    fn load_survey(&self, respondent: &str) -> Result<Option<SurveyRecord>, StoreError> {
        if !is_safe_id(respondent) {
            return Ok(None);
        }
        Self::read(&self.survey_path(respondent))
    }

    fn save_survey(&self, record: &SurveyRecord) -> Result<(), StoreError> {
        Self::write(&self.survey_path(&record.respondent_id), record)
    }
}

/// Keeps documents in memory; used by the CLI's one-shot runs and by tests.
#[derive(Debug, Default)]
pub struct MemoryStore {
    projects: Mutex<HashMap<String, Project>>,
    surveys: Mutex<HashMap<String, SurveyRecord>>,
}

impl ProjectStore for MemoryStore {
    fn load(&self, id: &str) -> Result<Option<Project>, StoreError> {
        Ok(self.projects.lock().unwrap().get(id).cloned())
    }

    fn save(&self, project: &Project) -> Result<(), StoreError> {
        self.projects
            .lock()
            .unwrap()
            .insert(project.id.clone(), project.clone());
        Ok(())
    }

    fn list(&self) -> Result<Vec<Project>, StoreError> {
        let mut out: Vec<Project> = self.projects.lock().unwrap().values().cloned().collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    fn load_survey(&self, respondent: &str) -> Result<Option<SurveyRecord>, StoreError> {
        Ok(self.surveys.lock().unwrap().get(respondent).cloned())
    }

    fn save_survey(&self, record: &SurveyRecord) -> Result<(), StoreError> {
        self.surveys
            .lock()
            .unwrap()
            .insert(record.respondent_id.clone(), record.clone());
        Ok(())
    }
}
