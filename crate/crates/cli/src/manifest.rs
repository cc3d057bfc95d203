//! Reproducibility manifest written next to every report.

use std::collections::BTreeMap;

use actionbench::gateway::{ModelRun, ProviderConfig};
use actionbench::Corpus;
use serde::Serialize;
use serde_json::Value;

use crate::output::{FileRef, Outputs};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct CorpusInfo {
    pub path: String,
    pub sha256: String,
    pub rows_parsed: usize,
    pub incidents: usize,
    pub malformed_rows: usize,
    pub duplicate_detail_ids: usize,
}

impl CorpusInfo {
    pub fn new(c: &Corpus) -> Self {
        Self {
            path: c.source_path.display().to_string(),
            sha256: c.content_hash.clone(),
            rows_parsed: c.rows_parsed,
            incidents: c.incidents.len(),
            malformed_rows: c.diagnostics.len(),
            duplicate_detail_ids: c.duplicate_detail_ids,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageCounts {
    pub model: String,
    pub vectors: usize,
    pub parse_failures: usize,
    pub other_failures: usize,
    /// Set when scored against a manual reference.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_scored: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_excluded: Option<usize>,
}

impl StageCounts {
    pub fn new(run: &ModelRun) -> Self {
        let parse_failures = run.failures.values().filter(|f| f.stage == "parse").count();
        Self {
            model: run.model_name.clone(),
            vectors: run.vectors.len(),
            parse_failures,
            other_failures: run.failures.len() - parse_failures,
            n_scored: None,
            n_excluded: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusInfo>,
    pub taxonomy_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_version: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub template_sha256: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub providers: Vec<Value>,
    /// Policy flags (policy, tie rule, repeats, ...).
    pub settings: BTreeMap<String, String>,
    pub inputs: Vec<FileRef>,
    pub counts: Vec<StageCounts>,
    pub outputs: Vec<FileRef>,
}

impl RunManifest {
    pub fn new(command: &str, taxonomy_version: &str) -> Self {
        Self {
            tool: "actionbench",
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            corpus: None,
            taxonomy_version: taxonomy_version.to_string(),
            template_version: None,
            template_sha256: BTreeMap::new(),
            providers: Vec::new(),
            settings: BTreeMap::new(),
            inputs: Vec::new(),
            counts: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.settings.insert(key.to_string(), value.to_string());
    }

    pub fn add_provider(&mut self, cfg: &ProviderConfig) {
        self.providers.push(redact(cfg));
    }

    /// Writes the manifest last, listing every other output; returns its
    /// SHA-256.
    pub fn write(mut self, out: &mut Outputs) -> Result<String, CliError> {
        self.outputs = out.written.clone();
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        out.json(MANIFEST_FILE, &self)?;
        let hash = out
            .written
            .iter()
            .find(|f| f.path == MANIFEST_FILE)
            .map(|f| f.sha256.clone())
            .expect("manifest just written");
        Ok(hash)
    }
}

fn secret_like(key: &str) -> bool {
    let k = key.to_ascii_lowercase();
    ["key", "token", "secret", "password", "authorization"]
        .iter()
        .any(|s| k.contains(s))
}

/// Provider config as JSON with secret-looking parameters masked. The key
/// variable's name is kept; its value is never read here.
pub fn redact(cfg: &ProviderConfig) -> Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(params) = v.get_mut("params").and_then(Value::as_object_mut) {
        for (k, val) in params.iter_mut() {
            if secret_like(k) {
                *val = Value::String("<redacted>".into());
            }
        }
    }
    v
}
