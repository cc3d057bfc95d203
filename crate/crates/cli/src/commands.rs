use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use actionbench::exact::{self, round2, round_big, Exact};
use actionbench::fusion::MissingPolicy;
use actionbench::gateway::{
    CollectOptions, FixtureStore, HttpTransport, LiveProvider, ReplayProvider, SystemClock,
};
use actionbench::metrics::{parse_weights, FrequencyTable};
use actionbench::pems::manual_from_json;
use actionbench::prompting::LogSource;
use actionbench::{
    action_frequencies, agreement_matrix, collect_run, corpus_metrics, default_taxonomy,
    enumerate_ensembles, load_corpus, weighted_difference, ActionTaxonomy, CorpusMetrics,
    EnsembleOptions, ModelRun, Policy, PromptTemplate, Provider, ProviderConfig, SizeSummary,
    TemplateKind, TieRule,
};
use serde::Serialize;

use crate::args::*;
use crate::manifest::{CorpusInfo, RunManifest, StageCounts};
use crate::output::{file_ref, slug, Outputs};
use crate::CliError;

pub fn load_taxonomy(arg: &TaxonomyArg) -> Result<ActionTaxonomy, CliError> {
    match &arg.taxonomy {
        Some(path) => Ok(ActionTaxonomy::load(path)?),
        None => Ok(default_taxonomy()),
    }
}

fn tie_rule(t: TieArg) -> TieRule {
    match t {
        TieArg::Zero => TieRule::TiesToZero,
        TieArg::One => TieRule::TiesToOne,
    }
}

fn load_run(path: &Path, t: &ActionTaxonomy) -> Result<ModelRun, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let run = ModelRun::from_json(&text).map_err(|e| CliError::data(path, e.to_string()))?;
    run.validate(t).map_err(|m| CliError::data(path, m))?;
    Ok(run)
}

/// Loads the runs named on the command line; names must be unique.
fn load_runs(inputs: &RunInputs, t: &ActionTaxonomy, min: usize) -> Result<Vec<ModelRun>, CliError> {
    if inputs.runs.len() < min {
        return Err(CliError::Usage(format!(
            "need at least {min} --run file(s), got {}",
            inputs.runs.len()
        )));
    }
    let runs = inputs
        .runs
        .iter()
        .map(|p| load_run(p, t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen = BTreeSet::new();
    for r in &runs {
        if !seen.insert(r.model_name.as_str()) {
            return Err(CliError::Usage(format!("model {:?} given twice", r.model_name)));
        }
    }
    Ok(runs)
}

/// Reads the manual reference, either as an id → mapping document or as a
/// ModelRun file.
pub fn load_manual(path: &Path, t: &ActionTaxonomy) -> Result<ModelRun, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if let Ok(run) = ModelRun::from_json(&text) {
        run.validate(t).map_err(|m| CliError::data(path, m))?;
        return Ok(run);
    }
    Ok(manual_from_json(&text, t, path)?)
}

fn add_inputs(m: &mut RunManifest, inputs: &RunInputs, manual: Option<&Path>) -> Result<(), CliError> {
    for p in &inputs.runs {
        m.inputs.push(file_ref(p)?);
    }
    if let Some(p) = manual {
        m.inputs.push(file_ref(p)?);
    }
    if let Some(p) = &inputs.taxonomy.taxonomy {
        m.inputs.push(file_ref(p)?);
    }
    Ok(())
}

fn finish(manifest: RunManifest, out: &mut Outputs) -> Result<(), CliError> {
    let hash = manifest.write(out)?;
    println!("manifest {} sha256 {hash}", out.dir().join(crate::manifest::MANIFEST_FILE).display());
    Ok(())
}

// ---------------------------------------------------------------- extract

fn provider_config(spec: &str) -> Result<ProviderConfig, CliError> {
    match spec.strip_prefix("replay:") {
        Some(name) if !name.trim().is_empty() => Ok(ProviderConfig::replay(name.trim())),
        Some(_) => Err(CliError::Usage("replay provider needs a name: replay:<name>".into())),
        None => Ok(ProviderConfig::load(Path::new(spec))?),
    }
}

fn build_provider(
    cfg: &ProviderConfig,
    store: Option<&Arc<FixtureStore>>,
) -> Result<Box<dyn Provider>, CliError> {
    if cfg.is_live() {
        let transport = HttpTransport::new(Duration::from_millis(cfg.timeout_ms))?;
        let provider = LiveProvider::new(
            cfg.clone(),
            Box::new(transport),
            Arc::new(SystemClock::new()),
            store.cloned(),
        )?;
        Ok(Box::new(provider))
    } else {
        let store = store.ok_or_else(|| {
            CliError::Usage(format!("provider {:?} replays fixtures; pass --replay-dir", cfg.name))
        })?;
        Ok(Box::new(ReplayProvider::new(cfg.name.clone(), store.clone())))
    }
}

fn template(
    kind: TemplateKind,
    args: &ExtractArgs,
    t: &ActionTaxonomy,
) -> Result<PromptTemplate, CliError> {
    Ok(match &args.template_dir {
        Some(dir) => PromptTemplate::from_dir(kind, dir, t)?,
        None => PromptTemplate::builtin(kind, &args.template_version, t)?,
    })
}

pub fn extract(args: &ExtractArgs) -> Result<(), CliError> {
    let t = load_taxonomy(&args.taxonomy)?;
    let corpus = load_corpus(&args.corpus)?;
    let tpl = template(TemplateKind::ActionExtraction, args, &t)?;
    let mut opts = CollectOptions::new(t.clone());
    opts.policy = match args.policy {
        PolicyArg::Strict => Policy::Strict,
        PolicyArg::Lenient => Policy::Lenient,
    };
    opts.repeats = args.repeats;
    opts.reprompts = args.reprompts;
    opts.tie_rule = tie_rule(args.tie_rule);
    opts.second_pass = args.second_pass;
    opts.log_source = match args.log_source {
        LogSourceArg::Full => LogSource::FullLog,
        LogSourceArg::Narrative => LogSource::Narrative,
    };
    if args.characteristics {
        opts.characteristics = Some(template(TemplateKind::CharacteristicsExtraction, args, &t)?);
    }
    if args.plans {
        opts.plans = Some(template(TemplateKind::PlanGeneration, args, &t)?);
    }

    // Resolve every provider, including API keys, before any request so a
    // configuration problem never leaves a partial report behind.
    let configs = args
        .providers
        .iter()
        .map(|s| provider_config(s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut names = BTreeSet::new();
    for c in &configs {
        if !names.insert(c.name.as_str()) {
            return Err(CliError::Usage(format!("provider {:?} given twice", c.name)));
        }
    }
    let store = match &args.replay_dir {
        Some(dir) => Some(Arc::new(FixtureStore::open(dir)?)),
        None => None,
    };
    let providers = configs
        .iter()
        .map(|c| build_provider(c, store.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;

    let mut runs = Vec::new();
    for p in &providers {
        log::info!("collecting {} over {} incidents", p.name(), corpus.incidents.len());
        let run = collect_run(p.as_ref(), &corpus, &tpl, &opts)?;
        log::info!(
            "{}: {} vectors, {} failures",
            run.model_name,
            run.vectors.len(),
            run.failures.len()
        );
        runs.push(run);
    }

    let mut out = Outputs::new(&args.out_dir)?;
    let mut manifest = RunManifest::new("extract", t.version());
    manifest.corpus = Some(CorpusInfo::new(&corpus));
    manifest.template_version = Some(tpl.version.clone());
    manifest.template_sha256.insert("action_extraction".into(), tpl.body_hash());
    for (name, extra) in [("characteristics_extraction", &opts.characteristics), ("plan_generation", &opts.plans)] {
        if let Some(x) = extra {
            manifest.template_sha256.insert(name.into(), x.body_hash());
        }
    }
    for c in &configs {
        manifest.add_provider(c);
    }
    manifest.set("policy", opts.policy);
    manifest.set("tie_rule", opts.tie_rule);
    manifest.set("repeats", opts.repeats);
    manifest.set("reprompts", opts.reprompts);
    manifest.set("second_pass", opts.second_pass);
    manifest.set("log_source", format!("{:?}", args.log_source).to_lowercase());
    manifest.inputs.push(file_ref(&args.corpus)?);
    if let Some(p) = &args.taxonomy.taxonomy {
        manifest.inputs.push(file_ref(p)?);
    }
    for run in &runs {
        out.write(&format!("runs/{}.json", slug(&run.model_name)), run.to_json().as_bytes())?;
        manifest.counts.push(StageCounts::new(run));
    }
    finish(manifest, &mut out)?;

    match runs.iter().find(|r| r.vectors.is_empty()) {
        Some(r) => Err(CliError::NothingScored(r.model_name.clone())),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Serialize)]
struct EvaluationRow {
    #[serde(flatten)]
    metrics: CorpusMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_weighted_difference: Option<String>,
}

fn weights(path: &Option<PathBuf>, t: &ActionTaxonomy) -> Result<Option<Vec<Exact>>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let w = parse_weights(&text)?;
    if w.len() != t.len() {
        return Err(CliError::data(path, format!("{} weights for {} actions", w.len(), t.len())));
    }
    Ok(Some(w))
}

fn mean_weighted(run: &ModelRun, manual: &ModelRun, w: &[Exact]) -> Result<Option<Exact>, CliError> {
    let mut sum = Exact::from_integer(0);
    let mut n = 0u64;
    for (id, v) in &run.vectors {
        if let Some(m) = manual.vector(*id) {
            sum += weighted_difference(v, m, w)?;
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / Exact::from_integer(n)))
}

const EVALUATION_HEADER: [&str; 18] = [
    "model",
    "n_actions",
    "n_scored",
    "n_excluded",
    "avg_hamming",
    "avg_hamming_exact",
    "total_unnecessary",
    "avg_unnecessary",
    "total_missed",
    "avg_missed",
    "mean_similarity",
    "mean_similarity_exact",
    "mean_tp",
    "mean_fp",
    "mean_tn",
    "mean_fn",
    "mean_weighted_difference",
    "mean_weighted_difference_exact",
];

fn evaluation_section(
    runs: &[ModelRun],
    manual: &ModelRun,
    w: Option<&[Exact]>,
    out: &mut Outputs,
    manifest: &mut RunManifest,
) -> Result<Vec<CorpusMetrics>, CliError> {
    let mut rows = Vec::new();
    let mut json = Vec::new();
    let mut all = Vec::new();
    for run in runs {
        let cm = corpus_metrics(run, manual)?;
        cm.check_identity().map_err(CliError::SelfCheck)?;
        let weighted = match w {
            Some(w) => mean_weighted(run, manual, w)?,
            None => None,
        };
        rows.push(vec![
            cm.model_name.clone(),
            cm.n_actions.to_string(),
            cm.n_scored.to_string(),
            cm.n_excluded.to_string(),
            round2(&cm.avg_hamming),
            exact::exact_string(&cm.avg_hamming),
            cm.total_unnecessary.to_string(),
            round2(&cm.mean_fp),
            cm.total_missed.to_string(),
            round2(&cm.mean_fn),
            round2(&cm.mean_similarity),
            exact::exact_string(&cm.mean_similarity),
            round2(&cm.mean_tp),
            round2(&cm.mean_fp),
            round2(&cm.mean_tn),
            round2(&cm.mean_fn),
            weighted.as_ref().map(round2).unwrap_or_default(),
            weighted.as_ref().map(exact::exact_string).unwrap_or_default(),
        ]);
        let mut counts = StageCounts::new(run);
        counts.n_scored = Some(cm.n_scored);
        counts.n_excluded = Some(cm.n_excluded);
        manifest.counts.push(counts);
        json.push(EvaluationRow {
            metrics: cm.clone(),
            mean_weighted_difference: weighted.as_ref().map(exact::exact_string),
        });
        all.push(cm);
    }
    out.csv("evaluation.csv", &EVALUATION_HEADER, &rows)?;
    out.json("evaluation.json", &json)?;
    Ok(all)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let t = load_taxonomy(&args.inputs.taxonomy)?;
    let runs = load_runs(&args.inputs, &t, 1)?;
    let manual = load_manual(&args.manual, &t)?;
    let w = weights(&args.weights, &t)?;
    let mut out = Outputs::new(&args.out_dir)?;
    let mut manifest = RunManifest::new("evaluate", t.version());
    add_inputs(&mut manifest, &args.inputs, Some(&args.manual))?;
    if let Some(p) = &args.weights {
        manifest.inputs.push(file_ref(p)?);
    }
    evaluation_section(&runs, &manual, w.as_deref(), &mut out, &mut manifest)?;
    agreement_section(&runs, Some(&manual), &t, &mut out)?;
    finish(manifest, &mut out)
}

// ---------------------------------------------------------------- agree

fn frequency_rows(table: &FrequencyTable, participants: &[&ModelRun]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (i, action) in table.actions.iter().enumerate() {
        for (j, model) in table.models.iter().enumerate() {
            let n = table.n_scored[j];
            let share = if n == 0 {
                String::new()
            } else {
                round2(&Exact::new(table.counts[i][j] as u64, n as u64))
            };
            rows.push(vec![
                action.clone(),
                model.clone(),
                table.counts[i][j].to_string(),
                n.to_string(),
                participants[j].failures.len().to_string(),
                share,
            ]);
        }
    }
    rows
}

fn agreement_section(
    runs: &[ModelRun],
    manual: Option<&ModelRun>,
    t: &ActionTaxonomy,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let mut participants: Vec<&ModelRun> = runs.iter().collect();
    if let Some(m) = manual {
        participants.push(m);
    }
    let freq = action_frequencies(&participants, t)?;
    out.csv(
        "frequencies.csv",
        &["action", "model", "count", "n_scored", "n_excluded", "share"],
        &frequency_rows(&freq, &participants),
    )?;
    out.json("frequencies.json", &freq)?;
    if participants.len() < 2 {
        return Ok(());
    }
    let matrix = agreement_matrix(&participants)?;
    let mut rows = Vec::new();
    for (i, a) in participants.iter().enumerate() {
        for (j, b) in participants.iter().enumerate() {
            let ids_a: BTreeSet<u64> = a.vectors.keys().copied().collect();
            let union = ids_a.union(&b.vectors.keys().copied().collect()).count();
            let (sim, exact_sim, common) = match &matrix.cells[i][j] {
                Some(c) => (round2(&c.similarity), exact::exact_string(&c.similarity), c.n_common),
                None => (String::new(), String::new(), 0),
            };
            rows.push(vec![
                a.model_name.clone(),
                b.model_name.clone(),
                sim,
                exact_sim,
                common.to_string(),
                (union - common).to_string(),
            ]);
        }
    }
    out.csv(
        "agreement.csv",
        &["model_a", "model_b", "similarity", "similarity_exact", "n_scored", "n_excluded"],
        &rows,
    )?;
    out.json("agreement.json", &matrix)?;
    Ok(())
}

pub fn agree(args: &AgreeArgs) -> Result<(), CliError> {
    let t = load_taxonomy(&args.inputs.taxonomy)?;
    let min = if args.manual.is_some() { 1 } else { 2 };
    let runs = load_runs(&args.inputs, &t, min)?;
    let manual = args.manual.as_deref().map(|p| load_manual(p, &t)).transpose()?;
    let mut out = Outputs::new(&args.out_dir)?;
    let mut manifest = RunManifest::new("agree", t.version());
    add_inputs(&mut manifest, &args.inputs, args.manual.as_deref())?;
    for r in &runs {
        manifest.counts.push(StageCounts::new(r));
    }
    agreement_section(&runs, manual.as_ref(), &t, &mut out)?;
    finish(manifest, &mut out)
}

// ---------------------------------------------------------------- ensemble

#[derive(Serialize)]
struct CombinationLine<'a> {
    size: usize,
    #[serde(flatten)]
    stat: &'a actionbench::fusion::CombinationStat,
}

fn ensemble_options(flags: &EnsembleFlags) -> EnsembleOptions {
    EnsembleOptions {
        tie_rule: tie_rule(flags.tie_rule),
        missing: match flags.missing {
            MissingArg::Skip => MissingPolicy::Skip,
            MissingArg::Zero => MissingPolicy::TreatAsZero,
        },
        sizes: flags.sizes.clone(),
    }
}

fn ensemble_section(
    runs: &[ModelRun],
    manual: &ModelRun,
    opts: &EnsembleOptions,
    out: &mut Outputs,
    manifest: &mut RunManifest,
) -> Result<Vec<SizeSummary>, CliError> {
    let refs: Vec<&ModelRun> = runs.iter().collect();
    let sizes = enumerate_ensembles(&refs, manual, opts)?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut best = BTreeMap::new();
    for s in &sizes {
        let b = s.best.as_ref();
        let stat = b.map(|b| &b.stat);
        let field = |f: fn(&actionbench::fusion::CombinationStat) -> String| stat.map(f).unwrap_or_default();
        rows.push(vec![
            s.size.to_string(),
            s.n_combinations.to_string(),
            s.n_evaluated.to_string(),
            s.mean.as_ref().map(|m| round_big(m, 2)).unwrap_or_default(),
            s.mean.as_ref().map(exact::big_exact_string).unwrap_or_default(),
            field(|s| s.members.join("+")),
            field(|s| round2(&s.mean_similarity)),
            field(|s| exact::exact_string(&s.mean_similarity)),
            field(|s| round2(&s.mean_tp)),
            field(|s| round2(&s.mean_fp)),
            field(|s| round2(&s.mean_tn)),
            field(|s| round2(&s.mean_fn)),
            field(|s| s.n_incidents.to_string()),
            field(|s| s.n_skipped.to_string()),
        ]);
        for stat in &s.distribution {
            lines.push(CombinationLine { size: s.size, stat });
        }
        if let Some(b) = b {
            best.insert(s.size.to_string(), b);
        }
    }
    out.csv(
        "ensemble_sizes.csv",
        &[
            "size",
            "n_combinations",
            "n_evaluated",
            "mean_similarity",
            "mean_similarity_exact",
            "best_members",
            "best_similarity",
            "best_similarity_exact",
            "best_mean_tp",
            "best_mean_fp",
            "best_mean_tn",
            "best_mean_fn",
            "n_scored",
            "n_excluded",
        ],
        &rows,
    )?;
    out.jsonl("ensemble_combinations.jsonl", &lines)?;
    out.json("ensemble_best.json", &best)?;
    manifest.set("tie_rule", opts.tie_rule);
    manifest.set("missing", format!("{:?}", opts.missing));
    if let Some(sizes) = &opts.sizes {
        manifest.set("sizes", sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    }
    Ok(sizes)
}

pub fn ensemble(args: &EnsembleArgs) -> Result<(), CliError> {
    let t = load_taxonomy(&args.inputs.taxonomy)?;
    let runs = load_runs(&args.inputs, &t, 1)?;
    let manual = load_manual(&args.manual, &t)?;
    let mut out = Outputs::new(&args.out_dir)?;
    let mut manifest = RunManifest::new("ensemble", t.version());
    add_inputs(&mut manifest, &args.inputs, Some(&args.manual))?;
    for r in &runs {
        manifest.counts.push(StageCounts::new(r));
    }
    ensemble_section(&runs, &manual, &ensemble_options(&args.flags), &mut out, &mut manifest)?;
    finish(manifest, &mut out)
}

// ---------------------------------------------------------------- report

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let t = load_taxonomy(&args.inputs.taxonomy)?;
    let runs = load_runs(&args.inputs, &t, 1)?;
    let manual = load_manual(&args.manual, &t)?;
    let w = weights(&args.weights, &t)?;
    let mut out = Outputs::new(&args.out_dir)?;
    let mut manifest = RunManifest::new("report", t.version());
    add_inputs(&mut manifest, &args.inputs, Some(&args.manual))?;
    if let Some(p) = &args.weights {
        manifest.inputs.push(file_ref(p)?);
    }
    let metrics = evaluation_section(&runs, &manual, w.as_deref(), &mut out, &mut manifest)?;
    agreement_section(&runs, Some(&manual), &t, &mut out)?;
    let sizes = ensemble_section(&runs, &manual, &ensemble_options(&args.flags), &mut out, &mut manifest)?;

    // the best singleton must be the top individual model
    if let Some(single) = sizes.iter().find(|s| s.size == 1).and_then(|s| s.best.as_ref()) {
        let top = metrics.iter().map(|m| m.mean_similarity).max();
        if top.is_some_and(|top| top != single.stat.mean_similarity) {
            return Err(CliError::SelfCheck(
                "best single-model ensemble differs from the top evaluated model".into(),
            ));
        }
    }
    finish(manifest, &mut out)
}
