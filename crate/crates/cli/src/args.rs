use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "actionbench", version, about = "Score LLM incident response plans against a manual reference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prompt providers (live or replayed) and write one ModelRun per provider.
    Extract(ExtractArgs),
    /// Score runs against the manual reference.
    Evaluate(EvaluateArgs),
    /// Majority-vote ensembles over every subset of runs.
    Ensemble(EnsembleArgs),
    /// Pairwise agreement and action frequencies.
    Agree(AgreeArgs),
    /// evaluate + agree + ensemble in one output directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TieArg {
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogSourceArg {
    Full,
    Narrative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MissingArg {
    Skip,
    Zero,
}

#[derive(Debug, Clone, Args)]
pub struct TaxonomyArg {
    /// Action list file (one action per line); defaults to the built-in 21 actions.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// `replay:<name>` or a provider TOML file; repeatable.
    #[arg(long = "provider", required = true)]
    pub providers: Vec<String>,
    #[arg(long, default_value = "v1")]
    pub template_version: String,
    /// Directory holding custom template files; replaces the built-in set.
    #[arg(long)]
    pub template_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    /// Extra prompts after an unparseable answer.
    #[arg(long, default_value_t = 2)]
    pub reprompts: u32,
    #[arg(long, value_enum, default_value_t = PolicyArg::Strict)]
    pub policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = TieArg::Zero)]
    pub tie_rule: TieArg,
    #[arg(long, value_enum, default_value_t = LogSourceArg::Full)]
    pub log_source: LogSourceArg,
    /// Re-prompt with a reformatting request instead of the original prompt.
    #[arg(long)]
    pub second_pass: bool,
    /// Run the characteristics-extraction pass first.
    #[arg(long)]
    pub characteristics: bool,
    /// Also generate free-text plans (stored, not scored).
    #[arg(long)]
    pub plans: bool,
    /// Fixture directory: required for replay providers, records live completions.
    #[arg(long)]
    pub replay_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub taxonomy: TaxonomyArg,
}

#[derive(Debug, Clone, Args)]
pub struct RunInputs {
    /// ModelRun JSON file; repeatable.
    #[arg(long = "run")]
    pub runs: Vec<PathBuf>,
    #[command(flatten)]
    pub taxonomy: TaxonomyArg,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub inputs: RunInputs,
    /// Manual reference: `{"<id>": {"<action>": 0|1, ...}}` or a ModelRun file.
    #[arg(long)]
    pub manual: PathBuf,
    /// Per-action weights (one per line or comma separated, decimals or a/b).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleFlags {
    /// Only these ensemble sizes, e.g. `2,4`.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = TieArg::Zero)]
    pub tie_rule: TieArg,
    /// What to do when an ensemble member has no vector for an incident.
    #[arg(long, value_enum, default_value_t = MissingArg::Skip)]
    pub missing: MissingArg,
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub inputs: RunInputs,
    #[arg(long)]
    pub manual: PathBuf,
    #[command(flatten)]
    pub flags: EnsembleFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AgreeArgs {
    #[command(flatten)]
    pub inputs: RunInputs,
    /// Include the manual reference as a participant.
    #[arg(long)]
    pub manual: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub inputs: RunInputs,
    #[arg(long)]
    pub manual: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub flags: EnsembleFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
}
