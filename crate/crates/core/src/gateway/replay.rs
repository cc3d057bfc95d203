//! Content-addressed completion fixtures.
//!
//! Layout: one `<key>.txt` file per completion holding the raw model text,
//! where `key = sha256("<provider>\n<prompt_hash>\n<sample>")`, plus a
//! `manifest.jsonl` listing every fixture sorted by key fields.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{prompt_hash, Completion, GatewayError, Provider};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub provider: String,
    pub prompt_hash: String,
    pub attempt: u32,
    pub incident_id: Option<u64>,
    pub file: String,
}

pub struct FixtureStore {
    dir: PathBuf,
    manifest: Mutex<BTreeSet<FixtureRecord>>,
}

fn io_err(path: &Path, e: std::io::Error) -> GatewayError {
    GatewayError::Io(format!("{}: {e}", path.display()))
}

/// Writes `contents` to `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl FixtureStore {
    /// Opens (creating if needed) a fixture directory.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let mut manifest = BTreeSet::new();
        if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let rec: FixtureRecord = serde_json::from_str(line).map_err(|e| {
                    GatewayError::Io(format!("{}:{}: {e}", manifest_path.display(), i + 1))
                })?;
                manifest.insert(rec);
            }
        }
        Ok(Self {
            dir,
            manifest: Mutex::new(manifest),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn file_name(provider: &str, prompt_hash: &str, sample: u32) -> String {
        let key = format!("{provider}\n{prompt_hash}\n{sample}");
        format!("{}.txt", hex::encode(Sha256::digest(key.as_bytes())))
    }

    pub fn get(&self, provider: &str, prompt_hash: &str, sample: u32) -> Option<String> {
        fs::read_to_string(self.dir.join(Self::file_name(provider, prompt_hash, sample))).ok()
    }

    pub fn put(
        &self,
        provider: &str,
        prompt_hash: &str,
        sample: u32,
        incident_id: Option<u64>,
        text: &str,
    ) -> Result<(), GatewayError> {
        let file = Self::file_name(provider, prompt_hash, sample);
        let path = self.dir.join(&file);
        write_atomic(&path, text.as_bytes()).map_err(|e| io_err(&path, e))?;
        let mut manifest = self.manifest.lock().unwrap();
        manifest.insert(FixtureRecord {
            provider: provider.to_string(),
            prompt_hash: prompt_hash.to_string(),
            attempt: sample,
            incident_id,
            file,
        });
        let body: String = manifest
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect();
        let manifest_path = self.dir.join(MANIFEST_FILE);
        write_atomic(&manifest_path, body.as_bytes()).map_err(|e| io_err(&manifest_path, e))
    }

    /// Convenience for building fixture sets: stores `text` as the answer to
    /// `prompt`.
    pub fn put_prompt(
        &self,
        provider: &str,
        prompt: &str,
        sample: u32,
        incident_id: Option<u64>,
        text: &str,
    ) -> Result<(), GatewayError> {
        self.put(provider, &prompt_hash(prompt), sample, incident_id, text)
    }

    pub fn records(&self) -> Vec<FixtureRecord> {
        self.manifest.lock().unwrap().iter().cloned().collect()
    }
}

/// Serves completions from a [`FixtureStore`] only; never touches the network.
pub struct ReplayProvider {
    name: String,
    store: std::sync::Arc<FixtureStore>,
}

impl ReplayProvider {
    pub fn new(name: impl Into<String>, store: std::sync::Arc<FixtureStore>) -> Self {
        Self {
            name: name.into(),
            store,
        }
    }
}

impl Provider for ReplayProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(
        &self,
        prompt: &str,
        sample: u32,
        _incident_id: Option<u64>,
    ) -> Result<Completion, GatewayError> {
        let hash = prompt_hash(prompt);
        let raw_text = self
            .store
            .get(&self.name, &hash, sample)
            .ok_or_else(|| GatewayError::FixtureMissing {
                provider: self.name.clone(),
                prompt_hash: hash.clone(),
                sample,
            })?;
        Ok(Completion {
            provider: self.name.clone(),
            prompt_hash: hash,
            sample,
            raw_text,
            latency_ms: 0,
            attempt: 0,
        })
    }
}
