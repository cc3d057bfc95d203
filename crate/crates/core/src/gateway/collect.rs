use std::collections::HashMap;

use rayon::prelude::*;

use super::{Completion, FailureRecord, GatewayError, ModelRun, Provider, RunSettings};
use crate::fusion::{fuse, TieRule};
use crate::parser::{parse_action_response, parse_characteristics, Diagnostic, Policy};
use crate::pems::{Corpus, IncidentRecord};
use crate::prompting::{LogSource, PromptTemplate};
use crate::taxonomy::{ActionTaxonomy, ActionVector};

#[derive(Debug, Clone)]
pub struct CollectOptions {
    pub taxonomy: ActionTaxonomy,
    pub policy: Policy,
    /// Parsed vectors wanted per incident; more than one are late-fused.
    pub repeats: u32,
    /// Extra prompts allowed after a response fails to parse.
    pub reprompts: u32,
    pub tie_rule: TieRule,
    /// Re-prompt with a reformatting request instead of the original prompt.
    pub second_pass: bool,
    pub log_source: LogSource,
    /// Optional characteristics-extraction pass run before action extraction.
    pub characteristics: Option<PromptTemplate>,
    /// Optional free-text plan generation; stored, never scored.
    pub plans: Option<PromptTemplate>,
}

impl CollectOptions {
    pub fn new(taxonomy: ActionTaxonomy) -> Self {
        Self {
            taxonomy,
            policy: Policy::Strict,
            repeats: 1,
            reprompts: 2,
            tie_rule: TieRule::TiesToZero,
            second_pass: false,
            log_source: LogSource::FullLog,
            characteristics: None,
            plans: None,
        }
    }
}

/// Prompt asking the model to restate a malformed answer as the bare mapping.
pub fn reformat_prompt(taxonomy: &ActionTaxonomy, raw: &str) -> String {
    let list: String = taxonomy
        .actions()
        .iter()
        .map(|a| format!("- \"{a}\"\n"))
        .collect();
    format!(
        "The following response was meant to be a Python dictionary assigning 0 or 1 to each predefined action.\n\n\
Response:\n---------\n{raw}\n\n\
Predefined Actions:\n-------------------\n{list}\n\
Rewrite the response as that Python dictionary only, with exactly these keys and values 0 or 1, and nothing else:\n"
    )
}

struct IncidentOutcome {
    incident_id: u64,
    vector: Option<ActionVector>,
    failure: Option<FailureRecord>,
    raw: Vec<Completion>,
    characteristics: Option<Vec<String>>,
    plan: Option<String>,
}

struct Session<'a> {
    provider: &'a dyn Provider,
    incident_id: u64,
    samples: HashMap<String, u32>,
    raw: Vec<Completion>,
}

enum Call {
    Done(Completion),
    Missing(GatewayError),
}

impl Session<'_> {
    fn call(&mut self, prompt: &str) -> Result<Call, GatewayError> {
        let sample = self.samples.entry(prompt.to_string()).or_insert(0);
        *sample += 1;
        match self.provider.complete(prompt, *sample, Some(self.incident_id)) {
            Ok(c) => {
                self.raw.push(c.clone());
                Ok(Call::Done(c))
            }
            Err(e @ GatewayError::FixtureMissing { .. }) => Ok(Call::Missing(e)),
            Err(e) => Err(e),
        }
    }
}

fn failure(stage: &str, error: Option<String>, diagnostics: Vec<Diagnostic>) -> Option<FailureRecord> {
    Some(FailureRecord {
        stage: stage.to_string(),
        error,
        diagnostics,
    })
}

fn collect_incident(
    provider: &dyn Provider,
    record: &IncidentRecord,
    template: &PromptTemplate,
    opts: &CollectOptions,
) -> Result<IncidentOutcome, GatewayError> {
    let mut session = Session {
        provider,
        incident_id: record.incident_id,
        samples: HashMap::new(),
        raw: Vec::new(),
    };
    let mut out = IncidentOutcome {
        incident_id: record.incident_id,
        vector: None,
        failure: None,
        raw: Vec::new(),
        characteristics: None,
        plan: None,
    };
    let mut record = record.clone();

    if let Some(tpl) = &opts.characteristics {
        match tpl.render(&record) {
            Ok(prompt) => match session.call(&prompt)? {
                Call::Done(c) => {
                    let quotes = parse_characteristics(&c.raw_text);
                    if !quotes.is_empty() {
                        record.narrative = Some(quotes.join(" "));
                    }
                    out.characteristics = Some(quotes);
                }
                Call::Missing(e) => log::warn!("{e}"),
            },
            Err(e) => log::warn!("{e}"),
        }
    }

    match template.render_from(&record, opts.log_source) {
        Err(e) => out.failure = failure("prompt", Some(e.to_string()), Vec::new()),
        Ok(prompt) => {
            let mut vectors = Vec::new();
            let mut last_diags = Vec::new();
            let mut missing = None;
            'repeats: for _ in 0..opts.repeats.max(1) {
                let mut to_send = prompt.clone();
                for _ in 0..=opts.reprompts {
                    let c = match session.call(&to_send)? {
                        Call::Done(c) => c,
                        Call::Missing(e) => {
                            missing = Some(e);
                            break 'repeats;
                        }
                    };
                    let parsed = parse_action_response(&c.raw_text, &opts.taxonomy, opts.policy);
                    if let Some(v) = parsed.vector {
                        vectors.push(v);
                        break;
                    }
                    last_diags = parsed.diagnostics;
                    if opts.second_pass {
                        to_send = reformat_prompt(&opts.taxonomy, &c.raw_text);
                    }
                }
            }
            if vectors.is_empty() {
                out.failure = match missing {
                    Some(e) => failure("provider", Some(e.to_string()), last_diags),
                    None => failure("parse", None, last_diags),
                };
            } else {
                out.vector =
                    Some(fuse(&vectors, opts.tie_rule).expect("vectors share the taxonomy"));
            }
        }
    }

    if let Some(tpl) = &opts.plans {
        if let Ok(prompt) = tpl.render(&record) {
            if let Call::Done(c) = session.call(&prompt)? {
                out.plan = Some(c.raw_text);
            }
        }
    }

    out.raw = session.raw;
    Ok(out)
}

/// Runs action extraction for every incident of the corpus.
///
/// A single incident never aborts the run: unparseable answers and missing
/// fixtures are recorded under `failures`. Transport, auth and rate-limit
/// errors abort. Incidents are processed in parallel; the result does not
/// depend on completion order.
pub fn collect_run(
    provider: &dyn Provider,
    corpus: &Corpus,
    template: &PromptTemplate,
    opts: &CollectOptions,
) -> Result<ModelRun, GatewayError> {
    let outcomes: Vec<IncidentOutcome> = corpus
        .incidents
        .par_iter()
        .map(|r| collect_incident(provider, r, template, opts))
        .collect::<Result<_, _>>()?;

    let mut run = ModelRun::new(provider.name(), &opts.taxonomy);
    run.settings = RunSettings {
        template_version: Some(template.version.clone()),
        policy: Some(opts.policy.to_string()),
        repeats: Some(opts.repeats.max(1)),
        tie_rule: Some(opts.tie_rule.to_string()),
        reprompts: Some(opts.reprompts),
    };
    for o in outcomes {
        if let Some(v) = o.vector {
            run.vectors.insert(o.incident_id, v);
        }
        if let Some(f) = o.failure {
            run.failures.insert(o.incident_id, f);
        }
        if !o.raw.is_empty() {
            run.raw.insert(o.incident_id, o.raw);
        }
        if let Some(c) = o.characteristics {
            run.characteristics.insert(o.incident_id, c);
        }
        if let Some(p) = o.plan {
            run.plans.insert(o.incident_id, p);
        }
    }
    Ok(run)
}
