use std::path::PathBuf;

use actionbench::fusion::FusionError;
use actionbench::gateway::GatewayError;
use actionbench::metrics::MetricsError;
use actionbench::pems::IngestError;
use actionbench::prompting::PromptError;
use actionbench::taxonomy::TaxonomyError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("report self-check failed: {0}")]
    SelfCheck(String),
    #[error("no incidents scored for {0}")]
    NothingScored(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Fusion(FusionError::TooManyModels(_) | FusionError::BadSize { .. }) => EXIT_USAGE,
            CliError::Gateway(GatewayError::Config(_)) => EXIT_USAGE,
            CliError::Gateway(
                GatewayError::Transport { .. }
                | GatewayError::RateLimited { .. }
                | GatewayError::AuthMissing { .. },
            ) => EXIT_TRANSPORT,
            _ => EXIT_DATA,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Data {
            path: path.into(),
            message: message.into(),
        }
    }
}
