//! Scoring engine for traffic-incident response plans encoded as binary
//! action vectors.
//!
//! The pipeline: [`pems`] loads incident logs, [`prompting`] renders the
//! extraction prompts, [`gateway`] obtains completions (live or replayed),
//! [`parser`] turns completions into [`ActionVector`]s, and [`metrics`] and
//! [`fusion`] score them against the manual reference.

pub mod exact;
pub mod fusion;
pub mod gateway;
pub mod metrics;
pub mod parser;
pub mod pems;
pub mod prompting;
pub mod taxonomy;

pub use exact::Exact;
pub use fusion::{enumerate_ensembles, fuse, majority_vote, EnsembleOptions, EnsembleResult, MissingPolicy, SizeSummary, TieRule};
pub use gateway::{collect_run, Completion, ModelRun, Provider, ProviderConfig};
pub use metrics::{
    action_frequencies, agreement_matrix, corpus_metrics, hamming, pair_metrics, weighted_difference,
    AgreementMatrix, CorpusMetrics, PairMetrics,
};
pub use parser::{parse_action_response, parse_characteristics, ParseOutcome, ParseStatus, Policy};
pub use pems::{load_corpus, strip_status_tokens, Corpus, IncidentRecord, LogEntry};
pub use prompting::{PromptTemplate, TemplateKind};
pub use taxonomy::{default_taxonomy, ActionTaxonomy, ActionVector};
