mod common;

use std::path::Path;

use actionbench_cli::{EXIT_DATA, EXIT_OK, EXIT_TRANSPORT, EXIT_USAGE};
use common::*;

fn run_args<'a>(base: Vec<&'a str>, runs: &'a [std::path::PathBuf]) -> Vec<&'a str> {
    let mut args = base;
    for p in runs {
        args.extend(["--run", s(p)]);
    }
    args
}

fn setup(models: usize, n: u64, seed: u64, dir: &Path) -> (std::path::PathBuf, Vec<std::path::PathBuf>) {
    let (manual, runs) = synthetic_runs(models, n, seed);
    let manual_path = dir.join("manual.json");
    write_manual(&manual_path, &manual);
    (manual_path, write_runs(dir, &runs))
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(cli(&[]), EXIT_USAGE);
    assert_eq!(cli(&["evaluate", "--bogus"]), EXIT_USAGE);
    assert_eq!(cli(&["ensemble", "--manual", "m.json", "--out-dir", "o", "--tie-rule", "half"]), EXIT_USAGE);
    assert_eq!(cli(&["--help"]), EXIT_OK);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // empty run set
    assert_eq!(cli(&["evaluate", "--manual", "m.json", "--out-dir", s(&out)]), EXIT_USAGE);
    // agreement needs two participants
    let (_, runs) = setup(1, 5, 1, dir.path());
    assert_eq!(cli(&run_args(vec!["agree", "--out-dir", s(&out)], &runs)), EXIT_USAGE);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.csv");
    assert_eq!(
        cli(&["extract", "--corpus", s(&missing), "--provider", "replay:m", "--replay-dir", s(dir.path()), "--out-dir", s(&out)]),
        EXIT_DATA
    );
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(cli(&["evaluate", "--run", s(&bad), "--manual", s(&bad), "--out-dir", s(&out)]), EXIT_DATA);
}

#[test]
fn missing_api_key_exits_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.csv");
    std::fs::write(&corpus, corpus_csv(3, 1)).unwrap();
    let cfg = dir.path().join("live.toml");
    std::fs::write(
        &cfg,
        "name = \"live-model\"\nendpoint = \"http://127.0.0.1:9/v1/chat/completions\"\napi_key_env = \"ACTIONBENCH_CLI_TEST_UNSET_KEY\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let code = cli(&["extract", "--corpus", s(&corpus), "--provider", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(code, EXIT_TRANSPORT);
    assert!(!out.exists());
}

#[test]
fn replay_provider_needs_a_fixture_dir() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.csv");
    std::fs::write(&corpus, corpus_csv(3, 1)).unwrap();
    let out = dir.path().join("out");
    assert_eq!(cli(&["extract", "--corpus", s(&corpus), "--provider", "replay:m", "--out-dir", s(&out)]), EXIT_USAGE);
}

#[test]
fn extract_with_nothing_scored_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.csv");
    std::fs::write(&corpus, corpus_csv(3, 1)).unwrap();
    let out = dir.path().join("out");
    let fixtures = dir.path().join("fixtures");
    let code = cli(&[
        "extract", "--corpus", s(&corpus), "--provider", "replay:m", "--replay-dir", s(&fixtures), "--out-dir", s(&out),
    ]);
    assert_eq!(code, EXIT_DATA);
    // the run file still records every failure
    let run = actionbench::ModelRun::from_json(&std::fs::read_to_string(out.join("runs/m.json")).unwrap()).unwrap();
    assert_eq!(run.failures.len(), 3);
}

#[test]
fn extract_replays_fixtures_and_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let text = corpus_csv(20, 2);
    let corpus = dir.path().join("corpus.csv");
    std::fs::write(&corpus, &text).unwrap();
    let (answers, _) = synthetic_runs(0, 20, 2);
    let fixtures = dir.path().join("fixtures");
    write_fixtures(&fixtures, &text, "m", &answers);
    let out = dir.path().join("out");
    let code = cli(&[
        "extract", "--corpus", s(&corpus), "--provider", "replay:m", "--replay-dir", s(&fixtures), "--out-dir", s(&out),
        "--repeats", "1", "--policy", "strict",
    ]);
    assert_eq!(code, EXIT_OK);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["counts"][0]["vectors"], 20);
    assert_eq!(manifest["corpus"]["incidents"], 20);
    assert_eq!(manifest["settings"]["policy"], "strict");
    assert_eq!(manifest["outputs"][0]["path"], "runs/m.json");
}

#[test]
fn evaluate_writes_tables_with_denominators() {
    let dir = tempfile::tempdir().unwrap();
    let (manual, runs) = setup(3, 30, 3, dir.path());
    let out = dir.path().join("out");
    let code = cli(&run_args(vec!["evaluate", "--manual", s(&manual), "--out-dir", s(&out)], &runs));
    assert_eq!(code, EXIT_OK);
    for (file, rows) in [("evaluation.csv", 3), ("agreement.csv", 16), ("frequencies.csv", 21 * 4)] {
        let table = read_csv(&out.join(file));
        assert_eq!(table.len(), rows, "{file}");
        assert!(table.iter().all(|r| r.contains_key("n_scored") && r.contains_key("n_excluded")), "{file}");
    }
    let eval = read_csv(&out.join("evaluation.csv"));
    assert!(eval.iter().all(|r| r["n_scored"] == "30" && r["n_excluded"] == "0"));
    assert!(out.join("evaluation.json").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn weights_add_a_weighted_column() {
    let dir = tempfile::tempdir().unwrap();
    let (manual, runs) = setup(1, 10, 4, dir.path());
    let weights = dir.path().join("w.txt");
    std::fs::write(&weights, vec!["1/21"; 21].join("\n")).unwrap();
    let out = dir.path().join("out");
    let code = cli(&run_args(
        vec!["evaluate", "--manual", s(&manual), "--weights", s(&weights), "--out-dir", s(&out)],
        &runs,
    ));
    assert_eq!(code, EXIT_OK);
    let row = &read_csv(&out.join("evaluation.csv"))[0];
    // uniform weights give hamming / n
    let avg = actionbench::exact::parse_exact(&row["avg_hamming_exact"]).unwrap();
    let weighted = actionbench::exact::parse_exact(&row["mean_weighted_difference_exact"]).unwrap();
    assert_eq!(weighted, avg / actionbench::Exact::from_integer(21));
}

#[test]
fn ensemble_sizes_filter() {
    let dir = tempfile::tempdir().unwrap();
    let (manual, runs) = setup(6, 20, 5, dir.path());
    let out = dir.path().join("out");
    let code = cli(&run_args(vec!["ensemble", "--manual", s(&manual), "--sizes", "2,4", "--out-dir", s(&out)], &runs));
    assert_eq!(code, EXIT_OK);
    let sizes: Vec<String> = read_csv(&out.join("ensemble_sizes.csv")).iter().map(|r| r["size"].clone()).collect();
    assert_eq!(sizes, ["2", "4"]);
    let lines = std::fs::read_to_string(out.join("ensemble_combinations.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 30);
    assert_eq!(cli(&run_args(vec!["ensemble", "--manual", s(&manual), "--sizes", "7", "--out-dir", s(&out)], &runs)), EXIT_USAGE);
}

#[test]
fn report_best_singleton_is_top_model() {
    let dir = tempfile::tempdir().unwrap();
    let (manual, runs) = setup(4, 40, 6, dir.path());
    let out = dir.path().join("out");
    let code = cli(&run_args(vec!["report", "--manual", s(&manual), "--out-dir", s(&out)], &runs));
    assert_eq!(code, EXIT_OK);
    let eval = read_csv(&out.join("evaluation.csv"));
    let top = eval
        .iter()
        .max_by_key(|r| actionbench::exact::parse_exact(&r["mean_similarity_exact"]).unwrap())
        .unwrap();
    let sizes = read_csv(&out.join("ensemble_sizes.csv"));
    assert_eq!(sizes[0]["best_members"], top["model"]);
    assert_eq!(sizes[0]["best_similarity_exact"], top["mean_similarity_exact"]);
    assert_eq!(sizes.len(), 4);
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (manual, runs) = setup(3, 15, 7, dir.path());
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        assert_eq!(cli(&run_args(vec!["report", "--manual", s(&manual), "--out-dir", s(&out)], &runs)), EXIT_OK);
        manifests.push(std::fs::read(out.join("manifest.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
}
