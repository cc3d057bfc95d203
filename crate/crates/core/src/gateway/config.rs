use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;

fn default_retries() -> u32 {
    2
}

fn default_rpm() -> u32 {
    60
}

fn default_backoff() -> u64 {
    500
}

fn default_max_backoff() -> u64 {
    30_000
}

fn default_timeout() -> u64 {
    120_000
}

/// Provider settings, usually loaded from a TOML file.
///
/// `api_key_env` names the environment variable holding the key; the key
/// itself never appears in configs, manifests, or run files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub name: String,
    /// Chat-completions URL. Absent for replay-only providers.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Model identifier sent on the wire; defaults to `name`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_backoff")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_max_backoff")]
    pub max_backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    /// Sampling parameters passed through verbatim (temperature, top_p, ...).
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl ProviderConfig {
    pub fn replay(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            endpoint: None,
            model: None,
            api_key_env: None,
            max_retries: default_retries(),
            requests_per_minute: default_rpm(),
            initial_backoff_ms: default_backoff(),
            max_backoff_ms: default_max_backoff(),
            timeout_ms: default_timeout(),
            params: serde_json::Map::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        let cfg: Self = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.name.trim().is_empty() {
            return Err(GatewayError::Config("provider name is empty".into()));
        }
        if self.requests_per_minute == 0 {
            return Err(GatewayError::Config(format!(
                "{}: requests_per_minute must be at least 1",
                self.name
            )));
        }
        if let Some(endpoint) = &self.endpoint {
            reqwest::Url::parse(endpoint)
                .map_err(|e| GatewayError::Config(format!("{}: endpoint: {e}", self.name)))?;
        }
        Ok(())
    }

    pub fn model_id(&self) -> &str {
        self.model.as_deref().unwrap_or(&self.name)
    }

    pub fn is_live(&self) -> bool {
        self.endpoint.is_some()
    }

    /// Reads the API key from the configured environment variable.
    pub fn api_key(&self) -> Result<String, GatewayError> {
        let var = self.api_key_env.clone().ok_or_else(|| GatewayError::AuthMissing {
            provider: self.name.clone(),
            var: "<api_key_env not configured>".into(),
        })?;
        match std::env::var(&var) {
            Ok(key) if !key.trim().is_empty() => Ok(key),
            _ => Err(GatewayError::AuthMissing {
                provider: self.name.clone(),
                var,
            }),
        }
    }
}
