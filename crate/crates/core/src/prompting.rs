//! Prompt templates and rendering.
//!
//! The built-in `v1` templates are stored verbatim under `assets/prompts/v1`.
//! Rendering substitutes the single `{log}` placeholder and nothing else, so
//! the literal braces of the example dictionary survive untouched.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pems::IncidentRecord;
use crate::taxonomy::ActionTaxonomy;

pub const PLACEHOLDER: &str = "{log}";
pub const BUILTIN_VERSION: &str = "v1";

const V1_ACTION_EXTRACTION: &str = include_str!("../assets/prompts/v1/action_extraction.txt");
const V1_CHARACTERISTICS: &str = include_str!("../assets/prompts/v1/characteristics_extraction.txt");
const V1_PLAN_GENERATION: &str = include_str!("../assets/prompts/v1/plan_generation.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("incident {0} has an empty log")]
    EmptyLog(u64),
    #[error("template must contain exactly one {PLACEHOLDER} placeholder, found {0}")]
    Placeholder(usize),
    #[error("action {action:?} is listed {count} times in the extraction template")]
    ActionListing { action: String, count: usize },
    #[error("unknown template version {0:?}")]
    UnknownVersion(String),
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateKind {
    ActionExtraction,
    CharacteristicsExtraction,
    PlanGeneration,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 3] = [
        TemplateKind::ActionExtraction,
        TemplateKind::CharacteristicsExtraction,
        TemplateKind::PlanGeneration,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateKind::ActionExtraction => "action_extraction.txt",
            TemplateKind::CharacteristicsExtraction => "characteristics_extraction.txt",
            TemplateKind::PlanGeneration => "plan_generation.txt",
        }
    }

    pub fn default_source(self) -> LogSource {
        match self {
            TemplateKind::ActionExtraction | TemplateKind::CharacteristicsExtraction => {
                LogSource::FullLog
            }
            TemplateKind::PlanGeneration => LogSource::Narrative,
        }
    }
}

/// Which text of an incident fills the placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogSource {
    FullLog,
    /// LLM-extracted narrative, falling back to the status-stripped log.
    Narrative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: TemplateKind,
    pub version: String,
    pub body: String,
    /// Set for action-extraction templates only.
    pub taxonomy_version: Option<String>,
}

fn listed_count(body: &str, action: &str) -> usize {
    let needle = format!("- \"{action}\"");
    body.lines().filter(|l| l.trim() == needle).count()
}

impl PromptTemplate {
    pub fn new(
        kind: TemplateKind,
        version: impl Into<String>,
        body: impl Into<String>,
        taxonomy: &ActionTaxonomy,
    ) -> Result<Self, PromptError> {
        let body = body.into();
        let n = body.matches(PLACEHOLDER).count();
        if n != 1 {
            return Err(PromptError::Placeholder(n));
        }
        let taxonomy_version = if kind == TemplateKind::ActionExtraction {
            for action in taxonomy.actions() {
                let count = listed_count(&body, action);
                if count != 1 {
                    return Err(PromptError::ActionListing {
                        action: action.clone(),
                        count,
                    });
                }
            }
            Some(taxonomy.version().to_string())
        } else {
            None
        };
        Ok(Self {
            kind,
            version: version.into(),
            body,
            taxonomy_version,
        })
    }

    /// Built-in template. For a taxonomy other than the built-in action set,
    /// the action-extraction body is regenerated with that taxonomy's actions.
    pub fn builtin(
        kind: TemplateKind,
        version: &str,
        taxonomy: &ActionTaxonomy,
    ) -> Result<Self, PromptError> {
        if version != BUILTIN_VERSION {
            return Err(PromptError::UnknownVersion(version.to_string()));
        }
        let body = match kind {
            TemplateKind::ActionExtraction if taxonomy.is_default_set() => {
                V1_ACTION_EXTRACTION.to_string()
            }
            TemplateKind::ActionExtraction => action_extraction_body(taxonomy),
            TemplateKind::CharacteristicsExtraction => V1_CHARACTERISTICS.to_string(),
            TemplateKind::PlanGeneration => V1_PLAN_GENERATION.to_string(),
        };
        Self::new(kind, version, body, taxonomy)
    }

    /// Loads a template from `dir/<kind file name>`; the version is the
    /// directory name.
    pub fn from_dir(
        kind: TemplateKind,
        dir: &Path,
        taxonomy: &ActionTaxonomy,
    ) -> Result<Self, PromptError> {
        let path = dir.join(kind.file_name());
        let body = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let version = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        Self::new(kind, version, body, taxonomy)
    }

    pub fn body_hash(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }

    pub fn render(&self, incident: &IncidentRecord) -> Result<String, PromptError> {
        self.render_from(incident, self.kind.default_source())
    }

    pub fn render_from(
        &self,
        incident: &IncidentRecord,
        source: LogSource,
    ) -> Result<String, PromptError> {
        if incident.full_log.trim().is_empty() {
            return Err(PromptError::EmptyLog(incident.incident_id));
        }
        let text = match source {
            LogSource::FullLog => incident.full_log.as_str(),
            LogSource::Narrative => incident.narrative_or_stripped(),
        };
        if text.trim().is_empty() {
            return Err(PromptError::EmptyLog(incident.incident_id));
        }
        Ok(self.body.replacen(PLACEHOLDER, text, 1))
    }
}

/// Action-extraction body for an arbitrary taxonomy, with the same layout as
/// the built-in template and an all-zero example response.
pub fn action_extraction_body(taxonomy: &ActionTaxonomy) -> String {
    let list: String = taxonomy
        .actions()
        .iter()
        .map(|a| format!("- \"{a}\"\n"))
        .collect();
    let example = taxonomy
        .mapping_literal(&taxonomy.zeros())
        .expect("zeros match taxonomy");
    format!(
        "Accident log:\n\n{PLACEHOLDER}\n\nTask:\n------\n\
Based on the provided accident log, generate a binary vector indicating whether each predefined accident action is observed in the log.\n\n\
Predefined Actions:\n-------------------\n{list}\n\
Instructions:\n-------------\n\
1. Parse the accident log to determine which actions are mentioned.\n\
2. For each predefined action, assign a binary value: 1 if the action is present in the log; 0 otherwise.\n\
3. Do not invent any new actions or modify the list provided.\n\
4. Your final output must be a Python dictionary exactly in the format shown below, and nothing else.\n\n\
Example Response:\n-----------------\n{example}\n\n\
Response (provide the Python dictionary only, following the example):\n"
    )
}
