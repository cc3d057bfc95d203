//! collect_run against replay fixtures.

use std::sync::Arc;

use actionbench::gateway::{CollectOptions, FixtureStore, ReplayProvider, MANIFEST_FILE};
use actionbench::prompting::TemplateKind;
use actionbench::{collect_run, default_taxonomy, ActionTaxonomy, Corpus, PromptTemplate};

const CORPUS: &str = "\
21455531,1,02/01/2023 16:11:00,[1] DEBRIS IN #2 LANE
21455531,2,02/01/2023 16:14:00,[1] 1125 RDWY
21455540,3,02/01/2023 17:02:00,[Unit Enroute] [1] SOLO VEH INTO TREES
21455540,4,02/01/2023 17:05:00,[1] REQ 1185
21455552,5,02/01/2023 18:30:00,[2] ANIMAL IN RDWY
21455561,6,02/01/2023 19:45:00,[1] BLANKET IN #3 LANE
";

fn corpus() -> Corpus {
    Corpus::from_text(CORPUS, "toy.csv").unwrap()
}

fn fixtures(
    dir: &std::path::Path,
    tpl: &PromptTemplate,
    answer: impl Fn(u64, u32) -> String,
    samples: u32,
) -> Arc<FixtureStore> {
    let store = Arc::new(FixtureStore::open(dir).unwrap());
    for r in &corpus().incidents {
        let prompt = tpl.render(r).unwrap();
        for s in 1..=samples {
            store
                .put_prompt("toy-model", &prompt, s, Some(r.incident_id), &answer(r.incident_id, s))
                .unwrap();
        }
    }
    store
}

fn vector_for(t: &ActionTaxonomy, id: u64) -> actionbench::ActionVector {
    let bits = (0..t.len()).map(|i| u8::from((id as usize + i).is_multiple_of(3))).collect();
    t.vector_from_bits(bits).unwrap()
}

#[test]
fn happy_path_scores_every_incident() {
    let t = default_taxonomy();
    let tpl = PromptTemplate::builtin(TemplateKind::ActionExtraction, "v1", &t).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = fixtures(dir.path(), &tpl, |id, _| t.mapping_literal(&vector_for(&t, id)).unwrap(), 1);
    let run = collect_run(&ReplayProvider::new("toy-model", store), &corpus(), &tpl, &CollectOptions::new(t.clone())).unwrap();
    assert_eq!(run.vectors.len(), 4);
    assert!(run.failures.is_empty());
    for (id, v) in &run.vectors {
        assert_eq!(v, &vector_for(&t, *id));
    }
    assert_eq!(run.settings.policy.as_deref(), Some("strict"));
}

#[test]
fn poisoned_incident_is_recorded_as_failure() {
    let t = default_taxonomy();
    let tpl = PromptTemplate::builtin(TemplateKind::ActionExtraction, "v1", &t).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let answer = |id: u64, _| {
        if id == 21455540 {
            "I recommend closing the lane and calling a tow truck.".to_string()
        } else {
            t.mapping_literal(&vector_for(&t, id)).unwrap()
        }
    };
    // the poisoned incident answers badly on every re-prompt
    let store = fixtures(dir.path(), &tpl, answer, 3);
    let run = collect_run(&ReplayProvider::new("toy-model", store), &corpus(), &tpl, &CollectOptions::new(t.clone())).unwrap();
    assert_eq!(run.vectors.keys().copied().collect::<Vec<_>>(), [21455531, 21455552, 21455561]);
    assert_eq!(run.failures.keys().copied().collect::<Vec<_>>(), [21455540]);
    assert_eq!(run.failures[&21455540].stage, "parse");
    assert_eq!(run.raw[&21455540].len(), 3);
}

#[test]
fn repeats_are_fused_on_a_toy_taxonomy() {
    let t = ActionTaxonomy::new("toy-5", ["A1", "A2", "A3", "A4", "A5"]).unwrap();
    let tpl = PromptTemplate::builtin(TemplateKind::ActionExtraction, "v1", &t).unwrap();
    let samples = [[1, 0, 1, 1, 0], [1, 1, 0, 1, 1], [0, 1, 1, 0, 0]];
    let dir = tempfile::tempdir().unwrap();
    let store = fixtures(
        dir.path(),
        &tpl,
        |_, s| t.mapping_literal(&t.vector_from_bits(samples[s as usize - 1].to_vec()).unwrap()).unwrap(),
        3,
    );
    let mut opts = CollectOptions::new(t.clone());
    opts.repeats = 3;
    let run = collect_run(&ReplayProvider::new("toy-model", store), &corpus(), &tpl, &opts).unwrap();
    assert_eq!(run.vectors.len(), 4);
    for v in run.vectors.values() {
        assert_eq!(v.bits(), [1, 1, 1, 1, 0]);
    }
}

#[test]
fn replay_runs_are_byte_identical() {
    let t = default_taxonomy();
    let tpl = PromptTemplate::builtin(TemplateKind::ActionExtraction, "v1", &t).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = fixtures(dir.path(), &tpl, |id, _| t.mapping_literal(&vector_for(&t, id)).unwrap(), 1);
    let manifest_before = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
    let provider = ReplayProvider::new("toy-model", store);
    let opts = CollectOptions::new(t.clone());
    let a = collect_run(&provider, &corpus(), &tpl, &opts).unwrap().to_json();
    let b = collect_run(&provider, &corpus(), &tpl, &opts).unwrap().to_json();
    assert_eq!(a, b);
    assert_eq!(std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap(), manifest_before);
}

#[test]
fn missing_fixtures_do_not_abort() {
    let t = default_taxonomy();
    let tpl = PromptTemplate::builtin(TemplateKind::ActionExtraction, "v1", &t).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(FixtureStore::open(dir.path()).unwrap());
    let run = collect_run(&ReplayProvider::new("toy-model", store), &corpus(), &tpl, &CollectOptions::new(t)).unwrap();
    assert!(run.vectors.is_empty());
    assert_eq!(run.failures.len(), 4);
    assert!(run.failures.values().all(|f| f.stage == "provider"));
}
