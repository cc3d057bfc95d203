//! Ingestion of PeMS-style incident logs.
//!
//! Input is headerless CSV with four fields per line:
//! `incident_id,detail_id,MM/DD/YYYY HH:MM:SS,free text`. Only the first three
//! commas are field separators; the free text keeps any commas it contains.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::ModelRun;
use crate::taxonomy::{ActionTaxonomy, TaxonomyError};

pub const TIMESTAMP_FORMAT: &str = "%m/%d/%Y %H:%M:%S";

/// Operational status tokens removed by [`strip_status_tokens`].
pub const STATUS_TOKENS: [&str; 5] = [
    "Unit Assigned",
    "Unit Enroute",
    "Unit Cleared",
    "Unit At Scene",
    "[Shared]",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} contains no valid log rows ({malformed} malformed)")]
    EmptyCorpus { path: PathBuf, malformed: usize },
    #[error("manual reference {path}: {message}")]
    BadManual { path: PathBuf, message: String },
    #[error("manual reference incident {incident_id}: {source}")]
    ManualEntry {
        incident_id: u64,
        #[source]
        source: TaxonomyError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub incident_id: u64,
    pub detail_id: u64,
    pub timestamp: NaiveDateTime,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub message: String,
}

/// Parses one CSV row. `line_no` is only used for the diagnostic.
pub fn parse_row(line: &str, line_no: usize) -> Result<LogEntry, ParseDiagnostic> {
    let diag = |message: String| ParseDiagnostic {
        line: line_no,
        message,
    };
    let mut fields = line.splitn(4, ',');
    let (Some(id), Some(detail), Some(ts), Some(text)) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(diag("expected 4 comma-separated fields".into()));
    };
    let positive = |field: &str, what: &str| -> Result<u64, ParseDiagnostic> {
        match field.trim().parse::<u64>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(diag(format!("{what} {field:?} is not a positive integer"))),
        }
    };
    let incident_id = positive(id, "incident_id")?;
    let detail_id = positive(detail, "detail_id")?;
    let timestamp = NaiveDateTime::parse_from_str(ts.trim(), TIMESTAMP_FORMAT)
        .map_err(|e| diag(format!("bad timestamp {ts:?}: {e}")))?;
    Ok(LogEntry {
        incident_id,
        detail_id,
        timestamp,
        text: text.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub incident_id: u64,
    /// Ordered by detail id, then timestamp.
    pub entries: Vec<LogEntry>,
    /// Entry texts joined by single spaces.
    pub full_log: String,
    /// Deterministic pre-filter output (status tokens removed).
    pub stripped: String,
    /// Narrative from the characteristics-extraction pass, when it was run.
    pub narrative: Option<String>,
}

impl IncidentRecord {
    pub fn new(incident_id: u64, mut entries: Vec<LogEntry>) -> Self {
        entries.sort_by(|a, b| {
            a.detail_id
                .cmp(&b.detail_id)
                .then(a.timestamp.cmp(&b.timestamp))
        });
        let full_log = entries
            .iter()
            .map(|e| e.text.trim())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        let stripped = strip_status_tokens(&full_log);
        Self {
            incident_id,
            entries,
            full_log,
            stripped,
            narrative: None,
        }
    }

    /// LLM narrative when available, otherwise the stripped log.
    pub fn narrative_or_stripped(&self) -> &str {
        self.narrative.as_deref().unwrap_or(&self.stripped)
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub incidents: Vec<IncidentRecord>,
    pub source_path: PathBuf,
    /// SHA-256 of the raw file bytes.
    pub content_hash: String,
    pub rows_parsed: usize,
    pub diagnostics: Vec<ParseDiagnostic>,
    /// Number of (incident, detail_id) pairs seen more than once.
    pub duplicate_detail_ids: usize,
    pub manual_reference: Option<ModelRun>,
}

impl Corpus {
    pub fn from_text(text: &str, source_path: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let source_path = source_path.into();
        let mut groups: BTreeMap<u64, Vec<LogEntry>> = BTreeMap::new();
        let mut diagnostics = Vec::new();
        let mut rows_parsed = 0;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            match parse_row(line, i + 1) {
                Ok(entry) => {
                    rows_parsed += 1;
                    groups.entry(entry.incident_id).or_default().push(entry);
                }
                Err(d) => diagnostics.push(d),
            }
        }
        if rows_parsed == 0 {
            return Err(IngestError::EmptyCorpus {
                path: source_path,
                malformed: diagnostics.len(),
            });
        }
        if !diagnostics.is_empty() {
            log::warn!(
                "{}: {} malformed rows skipped",
                source_path.display(),
                diagnostics.len()
            );
        }
        let mut duplicate_detail_ids = 0;
        let incidents: Vec<IncidentRecord> = groups
            .into_iter()
            .map(|(id, entries)| {
                let record = IncidentRecord::new(id, entries);
                let dups = record
                    .entries
                    .windows(2)
                    .filter(|w| w[0].detail_id == w[1].detail_id)
                    .count();
                if dups > 0 {
                    log::info!("incident {id}: {dups} duplicate detail ids kept");
                }
                duplicate_detail_ids += dups;
                record
            })
            .collect();
        Ok(Self {
            incidents,
            source_path,
            content_hash: hex::encode(Sha256::digest(text.as_bytes())),
            rows_parsed,
            diagnostics,
            duplicate_detail_ids,
            manual_reference: None,
        })
    }

    pub fn incident_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.incidents.iter().map(|r| r.incident_id)
    }

    pub fn get(&self, incident_id: u64) -> Option<&IncidentRecord> {
        self.incidents
            .binary_search_by_key(&incident_id, |r| r.incident_id)
            .ok()
            .map(|i| &self.incidents[i])
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|e| IngestError::FileUnreadable {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })?;
    Corpus::from_text(&text, path)
}

/// Builds the manual reference run from a JSON document mapping incident id
/// to a complete `{action: 0|1}` mapping.
pub fn manual_from_json(
    json: &str,
    taxonomy: &ActionTaxonomy,
    path: &Path,
) -> Result<ModelRun, IngestError> {
    let bad = |message: String| IngestError::BadManual {
        path: path.to_path_buf(),
        message,
    };
    let doc: BTreeMap<String, BTreeMap<String, i64>> =
        serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
    let mut run = ModelRun::new("Manual", taxonomy);
    for (key, mapping) in doc {
        let incident_id: u64 = key
            .trim()
            .parse()
            .map_err(|_| bad(format!("incident id {key:?} is not an integer")))?;
        let v = taxonomy
            .vector_from_map(&mapping)
            .map_err(|source| IngestError::ManualEntry {
                incident_id,
                source,
            })?;
        run.vectors.insert(incident_id, v);
    }
    Ok(run)
}

pub fn load_manual(path: &Path, taxonomy: &ActionTaxonomy) -> Result<ModelRun, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    manual_from_json(&text, taxonomy, path)
}

fn at_boundary_before(s: &str, i: usize) -> bool {
    i == 0 || s[..i].chars().next_back().is_some_and(char::is_whitespace)
}

fn at_boundary_after(s: &str, i: usize) -> bool {
    i == s.len() || s[i..].chars().next().is_some_and(char::is_whitespace)
}

fn strip_once(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    'outer: while i < s.len() {
        if at_boundary_before(s, i) {
            for tok in STATUS_TOKENS {
                if s[i..].starts_with(tok) && at_boundary_after(s, i + tok.len()) {
                    i += tok.len();
                    continue 'outer;
                }
            }
        }
        let c = s[i..].chars().next().expect("in bounds");
        out.push(c);
        i += c.len_utf8();
    }
    // Keep the first character of each whitespace run and drop the rest.
    let mut squeezed = String::with_capacity(out.len());
    let mut prev_ws = true;
    for c in out.chars() {
        let ws = c.is_whitespace();
        if !(ws && prev_ws) {
            squeezed.push(c);
        }
        prev_ws = ws;
    }
    if squeezed.ends_with(char::is_whitespace) {
        squeezed.pop();
    }
    squeezed
}

/// Removes the operational status tokens (`Unit Assigned`, `Unit Enroute`,
/// `Unit Cleared`, `Unit At Scene`) and `[Shared]` markers, matched as whole
/// whitespace-delimited phrases, then collapses whitespace runs.
///
/// Only deletes characters, so the output is a subsequence of the input.
/// Runs to a fixpoint, so it is idempotent.
pub fn strip_status_tokens(log: &str) -> String {
    let mut current = strip_once(log);
    loop {
        let next = strip_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}
