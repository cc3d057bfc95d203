//! Completion providers (live HTTP and fixture replay) and run collection.

mod collect;
mod config;
mod http;
mod ratelimit;
mod replay;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::parser::Diagnostic;
use crate::taxonomy::{ActionTaxonomy, ActionVector};

pub use collect::{collect_run, reformat_prompt, CollectOptions};
pub use config::ProviderConfig;
pub use http::{HttpTransport, LiveProvider, Transport, TransportError};
pub use ratelimit::{Clock, ManualClock, RateLimiter, SystemClock, WINDOW};
pub use replay::{write_atomic, FixtureRecord, FixtureStore, ReplayProvider, MANIFEST_FILE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("{provider}: transport failed after {attempts} attempts: {message}")]
    Transport {
        provider: String,
        attempts: u32,
        message: String,
    },
    #[error("{provider}: API key variable {var} is not set")]
    AuthMissing { provider: String, var: String },
    #[error("{provider}: rate limited by server after {attempts} attempts")]
    RateLimited { provider: String, attempts: u32 },
    #[error("{provider}: no fixture for prompt {prompt_hash} sample {sample}")]
    FixtureMissing {
        provider: String,
        prompt_hash: String,
        sample: u32,
    },
    #[error("provider config: {0}")]
    Config(String),
    #[error("fixture store: {0}")]
    Io(String),
}

/// SHA-256 of the prompt text, hex encoded.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub provider: String,
    pub prompt_hash: String,
    /// 1-based index of this call among calls with the same prompt.
    pub sample: u32,
    pub raw_text: String,
    pub latency_ms: u64,
    /// Transport attempts used; 0 when served from a fixture.
    pub attempt: u32,
}

/// A source of completions. `sample` distinguishes repeated calls with an
/// identical prompt so that replay can serve each one its own fixture.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(
        &self,
        prompt: &str,
        sample: u32,
        incident_id: Option<u64>,
    ) -> Result<Completion, GatewayError>;
}

/// Why an incident has no vector in a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Parser diagnostics of the last rejected completion.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

/// Settings a run was collected under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RunSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reprompts: Option<u32>,
}

/// One source's vectors over a corpus. The manual reference is also a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model_name: String,
    pub taxonomy_version: String,
    #[serde(default)]
    pub settings: RunSettings,
    pub vectors: BTreeMap<u64, ActionVector>,
    #[serde(default)]
    pub failures: BTreeMap<u64, FailureRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub raw: BTreeMap<u64, Vec<Completion>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub characteristics: BTreeMap<u64, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub plans: BTreeMap<u64, String>,
}

impl ModelRun {
    pub fn new(model_name: impl Into<String>, taxonomy: &ActionTaxonomy) -> Self {
        Self {
            model_name: model_name.into(),
            taxonomy_version: taxonomy.version().to_string(),
            settings: RunSettings::default(),
            vectors: BTreeMap::new(),
            failures: BTreeMap::new(),
            raw: BTreeMap::new(),
            characteristics: BTreeMap::new(),
            plans: BTreeMap::new(),
        }
    }

    /// Convenience constructor from `(incident_id, vector)` pairs.
    pub fn from_vectors(
        model_name: impl Into<String>,
        taxonomy: &ActionTaxonomy,
        vectors: impl IntoIterator<Item = (u64, ActionVector)>,
    ) -> Self {
        let mut run = Self::new(model_name, taxonomy);
        run.vectors.extend(vectors);
        run
    }

    pub fn vector(&self, incident_id: u64) -> Option<&ActionVector> {
        self.vectors.get(&incident_id)
    }

    /// Incident ids accounted for, scored or failed.
    pub fn covered_ids(&self) -> impl Iterator<Item = u64> + '_ {
        let mut ids: Vec<u64> = self
            .vectors
            .keys()
            .chain(self.failures.keys())
            .copied()
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter()
    }

    /// Checks the partition invariant and vector/taxonomy agreement.
    pub fn validate(&self, taxonomy: &ActionTaxonomy) -> Result<(), String> {
        if self.taxonomy_version != taxonomy.version() {
            return Err(format!(
                "run {} uses taxonomy {}, expected {}",
                self.model_name,
                self.taxonomy_version,
                taxonomy.version()
            ));
        }
        if let Some(id) = self.vectors.keys().find(|id| self.failures.contains_key(id)) {
            return Err(format!(
                "run {}: incident {id} is both scored and failed",
                self.model_name
            ));
        }
        for (id, v) in &self.vectors {
            taxonomy
                .check(v)
                .map_err(|e| format!("run {}: incident {id}: {e}", self.model_name))?;
        }
        Ok(())
    }

    /// Deterministic JSON encoding used for run files.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }
}
