//! One request/response contract over every provider wire style.

pub mod adapters;
pub mod cache;
pub mod mock;
pub mod transport;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use polyeval_core::{
    compute_idempotency_key, CacheMode, ErrorClass, ModelSpec, ProviderKind, RetryPolicy, Sampling,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::codec::CodecError;
use crate::secrets::{Secret, SecretSource};
use crate::sync::KeyedLimiter;
use adapters::{AttemptError, CallContext, Credential};
use cache::ResponseCache;
pub use transport::{HttpRequest, HttpResponse, HttpTransport, Method, Transport, TransportError};

/// Interval between status polls for `prediction_poll` providers.
pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub model_id: String,
    pub prompt_text: String,
    pub sampling: Sampling,
    pub sample_index: u32,
    pub idempotency_key: String,
}

impl ProviderRequest {
    pub fn new(model: &ModelSpec, prompt_text: &str, sample_index: u32) -> Self {
        ProviderRequest {
            model_id: model.model_id.clone(),
            prompt_text: prompt_text.to_string(),
            sampling: model.sampling.clone(),
            sample_index,
            idempotency_key: compute_idempotency_key(
                &model.model_id,
                prompt_text,
                &model.sampling,
                sample_index,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub completions: Vec<String>,
    pub latency_ms: u64,
    #[serde(default)]
    pub provider_meta: BTreeMap<String, String>,
}

impl ProviderResponse {
    pub fn text(&self) -> &str {
        self.completions.first().map(String::as_str).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Mock,
    Cache,
    Network,
}

/// One slept retry interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub nominal_ms: u64,
    pub slept_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub response: ProviderResponse,
    /// Transport attempts made; 0 for mock and cache answers.
    pub attempts: u32,
    pub backoff: Vec<Backoff>,
    pub source: Source,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("model {model_id}: credential variable {auth_ref} is not set")]
    MissingCredential { model_id: String, auth_ref: String },
    #[error("model {model_id}: cookie file named by {auth_ref} is unreadable or not a JSON object")]
    BadCookieFile { model_id: String, auth_ref: String },
    #[error("{class}: {message} (after {attempts} attempt(s))")]
    Provider {
        class: ErrorClass,
        message: String,
        attempts: u32,
    },
    #[error("retries exhausted after {attempts} attempts; last error {class}: {message}")]
    RetriesExhausted {
        class: ErrorClass,
        message: String,
        attempts: u32,
    },
    #[error("replay_miss: no cached response for key {key}")]
    ReplayMiss { key: String },
    #[error("mock model {model_id}: no fixture for key {key}")]
    FixtureMissing { model_id: String, key: String },
    #[error("model {model_id}: {problem}")]
    Misconfigured { model_id: String, problem: String },
    #[error("cache: {0}")]
    Cache(#[from] CodecError),
}

impl GatewayError {
    pub fn class(&self) -> Option<ErrorClass> {
        match self {
            GatewayError::Provider { class, .. } | GatewayError::RetriesExhausted { class, .. } => {
                Some(*class)
            }
            _ => None,
        }
    }

    pub fn attempts(&self) -> u32 {
        match self {
            GatewayError::Provider { attempts, .. } | GatewayError::RetriesExhausted { attempts, .. } => {
                *attempts
            }
            _ => 0,
        }
    }
}

pub struct Gateway {
    transport: Arc<dyn Transport>,
    secrets: Arc<dyn SecretSource>,
    clock: Arc<dyn Clock>,
    limiter: KeyedLimiter,
    cache: Option<ResponseCache>,
    rng: Mutex<StdRng>,
    poll_interval: Duration,
}

impl Gateway {
    /// `per_provider_concurrency` bounds in-flight requests per
    /// provider kind and endpoint.
    pub fn new(
        transport: Arc<dyn Transport>,
        secrets: Arc<dyn SecretSource>,
        clock: Arc<dyn Clock>,
        per_provider_concurrency: usize,
    ) -> Self {
        Gateway {
            transport,
            secrets,
            clock,
            limiter: KeyedLimiter::new(per_provider_concurrency),
            cache: None,
            rng: Mutex::new(StdRng::seed_from_u64(0)),
            poll_interval: DEFAULT_POLL_INTERVAL,
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache = Some(ResponseCache::new(dir));
        self
    }

    pub fn with_jitter_seed(self, seed: u64) -> Self {
        *self.rng.lock().unwrap() = StdRng::seed_from_u64(seed);
        self
    }

    pub fn with_poll_interval(mut self, interval: Duration) -> Self {
        self.poll_interval = interval;
        self
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn send(
        &self,
        model: &ModelSpec,
        request: &ProviderRequest,
        policy: &RetryPolicy,
        cache_mode: CacheMode,
    ) -> Result<Delivery, GatewayError> {
        if model.provider_kind == ProviderKind::Mock {
            return self.answer_from_fixture(model, request);
        }
        let key = &request.idempotency_key;
        let cache = match cache_mode {
            CacheMode::Bypass => None,
            CacheMode::Record | CacheMode::Replay => Some(self.cache.as_ref().ok_or_else(|| {
                GatewayError::Misconfigured {
                    model_id: model.model_id.clone(),
                    problem: format!("cache mode {cache_mode} needs a cache directory"),
                }
            })?),
        };
        if let Some(cache) = cache {
            if let Some(response) = cache.get(key)? {
                if !response.completions.is_empty() {
                    return Ok(Delivery {
                        response,
                        attempts: 0,
                        backoff: Vec::new(),
                        source: Source::Cache,
                    });
                }
            }
            if cache_mode == CacheMode::Replay {
                return Err(GatewayError::ReplayMiss { key: key.clone() });
            }
        }
        let delivery = self.send_with_retries(model, request, policy)?;
        if let Some(cache) = cache {
            cache.put(key, &delivery.response)?;
        }
        Ok(delivery)
    }

    fn answer_from_fixture(
        &self,
        model: &ModelSpec,
        request: &ProviderRequest,
    ) -> Result<Delivery, GatewayError> {
        let dir = model
            .fixture_dir
            .as_deref()
            .ok_or_else(|| GatewayError::Misconfigured {
                model_id: model.model_id.clone(),
                problem: "mock model without fixture_dir".into(),
            })?;
        match mock::lookup(Path::new(dir), &request.idempotency_key)? {
            Some(response) if !response.completions.is_empty() => Ok(Delivery {
                response,
                attempts: 0,
                backoff: Vec::new(),
                source: Source::Mock,
            }),
            _ => Err(GatewayError::FixtureMissing {
                model_id: model.model_id.clone(),
                key: request.idempotency_key.clone(),
            }),
        }
    }

    fn credential(&self, model: &ModelSpec) -> Result<Credential, GatewayError> {
        let Some(name) = model.auth_ref.as_deref() else {
            return Ok(Credential::None);
        };
        let missing = || GatewayError::MissingCredential {
            model_id: model.model_id.clone(),
            auth_ref: name.to_string(),
        };
        let value = self.secrets.lookup(name).ok_or_else(missing)?;
        if model.provider_kind != ProviderKind::CookieSession {
            return Ok(Credential::Bearer(value));
        }
        let bad = || GatewayError::BadCookieFile {
            model_id: model.model_id.clone(),
            auth_ref: name.to_string(),
        };
        let text = std::fs::read_to_string(value.expose()).map_err(|_| bad())?;
        let cookies: BTreeMap<String, String> = serde_json::from_str(&text).map_err(|_| bad())?;
        if cookies.is_empty() {
            return Err(bad());
        }
        let header = cookies
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("; ");
        Ok(Credential::Cookies(Secret::new(header)))
    }

    fn send_with_retries(
        &self,
        model: &ModelSpec,
        request: &ProviderRequest,
        policy: &RetryPolicy,
    ) -> Result<Delivery, GatewayError> {
        let credential = self.credential(model)?;
        let ctx = CallContext {
            model,
            request,
            credential: &credential,
            transport: self.transport.as_ref(),
            clock: self.clock.as_ref(),
            poll_interval: self.poll_interval,
        };
        let limiter_key = format!(
            "{}|{}",
            model.provider_kind.as_str(),
            model.endpoint.as_deref().unwrap_or("")
        );
        let max_attempts = policy.max_attempts.max(1);
        let mut backoff = Vec::new();
        let mut last = AttemptError::new(ErrorClass::ConnectionError, "no attempt made");
        for attempt in 1..=max_attempts {
            let outcome = {
                let _permit = self.limiter.acquire(&limiter_key);
                let started = self.clock.monotonic_ms();
                adapters::attempt(&ctx).map(|mut r| {
                    r.latency_ms = self.clock.monotonic_ms().saturating_sub(started);
                    r
                })
            };
            match outcome {
                Ok(response) => {
                    return Ok(Delivery {
                        response,
                        attempts: attempt,
                        backoff,
                        source: Source::Network,
                    })
                }
                Err(e) if !policy.is_retryable(e.class) => {
                    return Err(GatewayError::Provider {
                        class: e.class,
                        message: e.message,
                        attempts: attempt,
                    })
                }
                Err(e) => {
                    log::warn!(
                        "{} sample {}: attempt {attempt}/{max_attempts} failed: {}",
                        model.model_id,
                        request.sample_index,
                        e.class
                    );
                    last = e;
                    if attempt < max_attempts {
                        let nominal_ms = policy.nominal_delay_ms(attempt);
                        let unit: f64 = self.rng.lock().unwrap().random_range(-1.0..=1.0);
                        let slept_ms = policy.jittered_delay_ms(nominal_ms, unit);
                        self.clock.sleep(Duration::from_millis(slept_ms));
                        backoff.push(Backoff { nominal_ms, slept_ms });
                    }
                }
            }
        }
        Err(GatewayError::RetriesExhausted {
            class: last.class,
            message: last.message,
            attempts: max_attempts,
        })
    }
}
