//! Synthetic corpora, runs and fixtures for the CLI tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use actionbench::gateway::FixtureStore;
use actionbench::{default_taxonomy, ActionVector, Corpus, ModelRun, PromptTemplate, TemplateKind};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const FIRST_ID: u64 = 21_455_531;

const PHRASES: [&str; 8] = [
    "[1] DEBRIS IN #2 LANE",
    "[Unit Enroute] [1] SOLO VEH INTO TREES",
    "[2] 1125 RDWY",
    "[1] REQ 1185 FOR BLOCKING VEH",
    "[Unit At Scene] [1] ANIMAL IN RDWY",
    "[1] SIGALERT ISSUED FOR #3 LANE",
    "[Shared] [2] 1141 REQ MINOR INJ",
    "[1] CHP ON SCENE, LANES OPEN",
];

/// A corpus of `n` incidents with two or three log rows each.
pub fn corpus_csv(n: u64, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = String::new();
    let mut detail = 1u64;
    for i in 0..n {
        let id = FIRST_ID + i;
        for k in 0..rng.gen_range(2..=3) {
            let text = PHRASES[rng.gen_range(0..PHRASES.len())];
            out.push_str(&format!("{id},{detail},02/01/2023 16:{:02}:00,{text} PM {i}.{k}\n", 10 + k));
            detail += 1;
        }
    }
    out
}

pub fn random_vector(rng: &mut StdRng) -> ActionVector {
    let bits = (0..21).map(|_| u8::from(rng.gen_bool(0.3))).collect();
    default_taxonomy().vector_from_bits(bits).unwrap()
}

pub fn noisy(v: &ActionVector, flips: usize, rng: &mut StdRng) -> ActionVector {
    let mut bits = v.bits().to_vec();
    for _ in 0..flips {
        let i = rng.gen_range(0..bits.len());
        bits[i] ^= 1;
    }
    default_taxonomy().vector_from_bits(bits).unwrap()
}

/// Manual reference plus `models` runs of increasing noise over `n` incidents.
pub fn synthetic_runs(models: usize, n: u64, seed: u64) -> (ModelRun, Vec<ModelRun>) {
    let t = default_taxonomy();
    let mut rng = StdRng::seed_from_u64(seed);
    let manual = ModelRun::from_vectors("Manual", &t, (0..n).map(|i| (FIRST_ID + i, random_vector(&mut rng))));
    let runs = (0..models)
        .map(|j| {
            let vs: Vec<_> = manual
                .vectors
                .iter()
                .map(|(id, v)| (*id, noisy(v, j + 1, &mut rng)))
                .collect();
            ModelRun::from_vectors(format!("model-{j}"), &t, vs)
        })
        .collect();
    (manual, runs)
}

/// Writes the manual reference in the `{id: {action: bit}}` form.
pub fn write_manual(path: &Path, manual: &ModelRun) {
    let t = default_taxonomy();
    let doc: BTreeMap<String, BTreeMap<String, u8>> = manual
        .vectors
        .iter()
        .map(|(id, v)| (id.to_string(), t.to_mapping(v).unwrap().into_iter().collect()))
        .collect();
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
}

pub fn write_runs(dir: &Path, runs: &[ModelRun]) -> Vec<PathBuf> {
    runs.iter()
        .map(|r| {
            let p = dir.join(format!("{}.json", r.model_name));
            std::fs::write(&p, r.to_json()).unwrap();
            p
        })
        .collect()
}

/// Stores one answer per incident for `provider`, rendered from the
/// built-in action prompt.
pub fn write_fixtures(dir: &Path, corpus_text: &str, provider: &str, answers: &ModelRun) {
    let t = default_taxonomy();
    let corpus = Corpus::from_text(corpus_text, "corpus.csv").unwrap();
    let tpl = PromptTemplate::builtin(TemplateKind::ActionExtraction, "v1", &t).unwrap();
    let store = FixtureStore::open(dir).unwrap();
    for r in &corpus.incidents {
        let v = answers.vector(r.incident_id).unwrap();
        let text = format!("Reasoning omitted.\n```python\n{}\n```\n", t.mapping_literal(v).unwrap());
        store
            .put_prompt(provider, &tpl.render(r).unwrap(), 1, Some(r.incident_id), &text)
            .unwrap();
    }
}

pub fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["actionbench"];
    full.extend_from_slice(args);
    actionbench_cli::run(full)
}

pub fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
