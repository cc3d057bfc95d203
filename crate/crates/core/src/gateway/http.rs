//! Live chat-completion provider.
//!
//! Requests use the common chat-completions shape: a `messages` array in,
//! `choices[0].message.content` out. Sampling parameters from the config are
//! merged into the request body verbatim.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thiserror::Error;

use super::ratelimit::{Clock, RateLimiter};
use super::replay::FixtureStore;
use super::{prompt_hash, Completion, GatewayError, Provider, ProviderConfig};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
}

impl TransportError {
    fn retriable(&self) -> bool {
        match self {
            TransportError::Network(_) => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
        }
    }
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<Value, TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<Value, TransportError> {
        let resp = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .json(body)
            .send()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Network(format!("bad JSON body: {e}")))
    }
}

fn completion_text(body: &Value) -> Option<String> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
}

pub struct LiveProvider {
    cfg: ProviderConfig,
    api_key: String,
    transport: Box<dyn Transport>,
    limiter: Arc<RateLimiter>,
    clock: Arc<dyn Clock>,
    store: Option<Arc<FixtureStore>>,
}

impl LiveProvider {
    /// Fails with `AuthMissing` before any request when the key variable is
    /// unset.
    pub fn new(
        cfg: ProviderConfig,
        transport: Box<dyn Transport>,
        clock: Arc<dyn Clock>,
        store: Option<Arc<FixtureStore>>,
    ) -> Result<Self, GatewayError> {
        cfg.validate()?;
        if cfg.endpoint.is_none() {
            return Err(GatewayError::Config(format!(
                "{}: live provider needs an endpoint",
                cfg.name
            )));
        }
        let api_key = cfg.api_key()?;
        let limiter = Arc::new(RateLimiter::new(cfg.requests_per_minute));
        Ok(Self {
            cfg,
            api_key,
            transport,
            limiter,
            clock,
            store,
        })
    }

    fn request_body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.cfg.model_id(),
            "messages": [{"role": "user", "content": prompt}],
        });
        let obj = body.as_object_mut().expect("object literal");
        for (k, v) in &self.cfg.params {
            obj.insert(k.clone(), v.clone());
        }
        body
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(
            self.cfg
                .initial_backoff_ms
                .saturating_mul(factor)
                .min(self.cfg.max_backoff_ms),
        )
    }
}

impl Provider for LiveProvider {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn complete(
        &self,
        prompt: &str,
        sample: u32,
        incident_id: Option<u64>,
    ) -> Result<Completion, GatewayError> {
        let hash = prompt_hash(prompt);
        if let Some(store) = &self.store {
            if let Some(raw_text) = store.get(&self.cfg.name, &hash, sample) {
                return Ok(Completion {
                    provider: self.cfg.name.clone(),
                    prompt_hash: hash,
                    sample,
                    raw_text,
                    latency_ms: 0,
                    attempt: 0,
                });
            }
        }
        let url = self.cfg.endpoint.as_deref().expect("checked in new");
        let body = self.request_body(prompt);
        let max_attempts = self.cfg.max_retries + 1;
        let mut last = None;
        for attempt in 1..=max_attempts {
            self.limiter.acquire(self.clock.as_ref());
            let started = Instant::now();
            match self.transport.post_json(url, &self.api_key, &body) {
                Ok(resp) => {
                    let raw_text = completion_text(&resp).ok_or_else(|| GatewayError::Transport {
                        provider: self.cfg.name.clone(),
                        attempts: attempt,
                        message: "response has no choices[0].message.content".into(),
                    })?;
                    if let Some(store) = &self.store {
                        store.put(&self.cfg.name, &hash, sample, incident_id, &raw_text)?;
                    }
                    return Ok(Completion {
                        provider: self.cfg.name.clone(),
                        prompt_hash: hash,
                        sample,
                        raw_text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt,
                    });
                }
                Err(e) if e.retriable() => {
                    log::warn!("{}: attempt {attempt}/{max_attempts} failed: {e}", self.cfg.name);
                    last = Some(e);
                    if attempt < max_attempts {
                        self.clock.sleep(self.backoff(attempt));
                    }
                }
                Err(e) => {
                    return Err(GatewayError::Transport {
                        provider: self.cfg.name.clone(),
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
            }
        }
        match last {
            Some(TransportError::Status { status: 429, .. }) => Err(GatewayError::RateLimited {
                provider: self.cfg.name.clone(),
                attempts: max_attempts,
            }),
            other => Err(GatewayError::Transport {
                provider: self.cfg.name.clone(),
                attempts: max_attempts,
                message: other.map(|e| e.to_string()).unwrap_or_default(),
            }),
        }
    }
}
