//! Loader and checker for the hallucination fixture corpus.
//!
//! Shared by the core test suite and the CLI acceptance target.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use actionbench::parser::{ParseOutcome, ParseStatus};
use actionbench::{default_taxonomy, parse_action_response, Policy};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct Expectation {
    pub mode: String,
    pub strict: String,
    pub lenient: String,
    pub codes: Vec<String>,
}

pub struct Fixture {
    pub name: String,
    pub raw: String,
    pub expect: Expectation,
}

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("..")
        .join("core")
        .join("tests")
        .join("fixtures")
        .join("hallucinations")
}

pub fn load() -> Vec<Fixture> {
    let dir = corpus_dir();
    let text = std::fs::read_to_string(dir.join("expected.json")).expect("expected.json");
    let expected: BTreeMap<String, Expectation> = serde_json::from_str(&text).expect("valid json");
    expected
        .into_iter()
        .map(|(name, expect)| Fixture {
            raw: std::fs::read_to_string(dir.join(&name)).expect("fixture file"),
            name,
            expect,
        })
        .collect()
}

fn status_name(s: ParseStatus) -> &'static str {
    match s {
        ParseStatus::Parsed => "parsed",
        ParseStatus::Repaired => "repaired",
        ParseStatus::Rejected => "rejected",
    }
}

/// True when `raw` assigns a 1 to `key` somewhere.
pub fn explicitly_one(raw: &str, key: &str) -> bool {
    raw.match_indices(key).any(|(i, _)| {
        let rest = raw[i + key.len()..].trim_start_matches(['"', '\'', '\u{201D}', '\u{2019}']);
        let Some(rest) = rest.trim_start().strip_prefix(':') else {
            return false;
        };
        let rest = rest.trim_start().trim_start_matches(['"', '\'']);
        ["1", "true", "True"].iter().any(|t| {
            rest.strip_prefix(t)
                .is_some_and(|r| !r.starts_with(|c: char| c.is_ascii_alphanumeric()))
        })
    })
}

/// Checks one fixture; returns a description of every mismatch.
pub fn check(f: &Fixture) -> Vec<String> {
    let t = default_taxonomy();
    let mut problems = Vec::new();
    let strict = parse_action_response(&f.raw, &t, Policy::Strict);
    let lenient = parse_action_response(&f.raw, &t, Policy::Lenient);
    for (label, out, want) in [
        ("strict", &strict, &f.expect.strict),
        ("lenient", &lenient, &f.expect.lenient),
    ] {
        if status_name(out.status) != want {
            problems.push(format!(
                "{}: {label} gave {} (want {want}): {:?}",
                f.name,
                status_name(out.status),
                out.diagnostics
            ));
        }
    }
    for code in &f.expect.codes {
        if !lenient.diagnostics.iter().any(|d| &format!("{:?}", d.code) == code) {
            problems.push(format!("{}: missing diagnostic {code}", f.name));
        }
    }
    problems.extend(invented_ones(&f.name, &f.raw, &lenient));
    if strict.is_accepted() && strict.vector != lenient.vector {
        problems.push(format!("{}: strict and lenient vectors differ", f.name));
    }
    problems
}

fn invented_ones(name: &str, raw: &str, out: &ParseOutcome) -> Vec<String> {
    let t = default_taxonomy();
    let Some(v) = &out.vector else { return Vec::new() };
    t.actions()
        .iter()
        .zip(v.bits())
        .filter(|(a, b)| **b == 1 && !explicitly_one(raw, a))
        .map(|(a, _)| format!("{name}: {a:?} set to 1 without an explicit 1 in the text"))
        .collect()
}
