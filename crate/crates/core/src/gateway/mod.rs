//! Gateway to external model endpoints: chat-style vision-language
//! completions and image embeddings.
//!
//! Every completion goes through a content-addressed response cache, a
//! per-endpoint in-flight bound and a retry loop with exponential backoff.
//! Embeddings are memoized per `(provider, image content hash)`.

mod cache;
mod config;
mod embed;
mod http;
mod mock;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::trajectory::StateImage;

pub use cache::ResponseCache;
pub use config::{ConfigError, EmbeddingConfig, EmbeddingKind, EndpointKind, GatewayConfig};
pub use embed::{
    EmbedError, EmbeddingProvider, FALLBACK_SIDE, FallbackEmbedder, fallback_embedding,
};
pub use http::{HttpChatProvider, HttpEmbedder};
pub use mock::{MockRule, ScriptedProvider};

/// Largest completion budget a request may ask for.
pub const MAX_OUTPUT_TOKENS: u32 = 16384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub id: String,
    #[serde(default)]
    pub base_url: Option<String>,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub auth_env: Option<String>,
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub max_retries: u32,
    pub retry_base: Duration,
}

impl ModelEndpoint {
    pub fn new(id: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            base_url: None,
            model_name: model_name.into(),
            auth_env: None,
            max_in_flight: 4,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            retry_base: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(StateImage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub parts: Vec<Part>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for ChatRequest {
    fn default() -> Self {
        Self {
            parts: Vec::new(),
            temperature: 0.0,
            max_output_tokens: 8192,
        }
    }
}

impl ChatRequest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(mut self, text: impl Into<String>) -> Self {
        self.parts.push(Part::Text(text.into()));
        self
    }

    pub fn image(mut self, image: &StateImage) -> Self {
        self.parts.push(Part::Image(image.clone()));
        self
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }
}

/// A request with image bytes loaded and its cache key computed.
#[derive(Debug, Clone)]
pub struct PreparedRequest {
    pub key: String,
    pub parts: Vec<PreparedPart>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone)]
pub enum PreparedPart {
    Text(String),
    Image { sha256: String, bytes: Arc<Vec<u8>> },
}

impl PreparedRequest {
    /// All text parts joined by newlines.
    pub fn prompt_text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                PreparedPart::Text(t) => Some(t.as_str()),
                PreparedPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_hashes(&self) -> Vec<&str> {
        self.parts
            .iter()
            .filter_map(|p| match p {
                PreparedPart::Image { sha256, .. } => Some(sha256.as_str()),
                PreparedPart::Text(_) => None,
            })
            .collect()
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    endpoint: &'a str,
    model: &'a str,
    parts: Vec<KeyPart<'a>>,
    temperature: f64,
    max_output_tokens: u32,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum KeyPart<'a> {
    Text(&'a str),
    Image(&'a str),
}

/// SHA-256 over the canonical request: endpoint, model, trimmed text parts,
/// image content hashes and sampling parameters.
pub fn request_key(
    endpoint: &ModelEndpoint,
    parts: &[PreparedPart],
    temperature: f64,
    max_output_tokens: u32,
) -> String {
    let material = KeyMaterial {
        endpoint: &endpoint.id,
        model: &endpoint.model_name,
        parts: parts
            .iter()
            .map(|p| match p {
                PreparedPart::Text(t) => KeyPart::Text(t.trim()),
                PreparedPart::Image { sha256, .. } => KeyPart::Image(sha256),
            })
            .collect(),
        temperature,
        max_output_tokens,
    };
    let canonical = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(canonical))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("request failed: {0}")]
    Fatal(String),
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn complete(
        &self,
        endpoint: &ModelEndpoint,
        request: &PreparedRequest,
    ) -> Result<String, ProviderError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown endpoint `{0}`")]
    UnknownEndpoint(String),
    #[error("unknown embedding provider `{0}`")]
    UnknownProvider(String),
    #[error("request has no message parts")]
    EmptyRequest,
    #[error("max_output_tokens {requested} exceeds the budget of {limit}")]
    BudgetExceeded { requested: u32, limit: u32 },
    #[error("endpoint error for request {key}: {message}")]
    Endpoint { key: String, message: String },
    #[error("authentication failed for request {key}: {message}")]
    Auth { key: String, message: String },
    #[error("request {key} timed out")]
    Timeout { key: String },
    #[error(transparent)]
    Image(#[from] crate::trajectory::ImageError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

impl GatewayError {
    /// The request key, when the failure is tied to one request.
    pub fn request_key(&self) -> Option<&str> {
        match self {
            GatewayError::Endpoint { key, .. }
            | GatewayError::Auth { key, .. }
            | GatewayError::Timeout { key } => Some(key),
            _ => None,
        }
    }
}

struct EndpointSlot {
    endpoint: ModelEndpoint,
    provider: Arc<dyn ChatProvider>,
    permits: Semaphore,
    network_calls: AtomicU64,
}

struct EmbedderSlot {
    provider: Arc<dyn EmbeddingProvider>,
    allow_fallback: bool,
}

type EmbedKey = (String, String);

pub struct Gateway {
    endpoints: HashMap<String, Arc<EndpointSlot>>,
    embedders: HashMap<String, EmbedderSlot>,
    cache: ResponseCache,
    embeddings: Mutex<HashMap<EmbedKey, Arc<[f64]>>>,
    fallback: FallbackEmbedder,
}

impl Gateway {
    pub fn new(cache: ResponseCache) -> Self {
        let mut gw = Self {
            endpoints: HashMap::new(),
            embedders: HashMap::new(),
            cache,
            embeddings: Mutex::new(HashMap::new()),
            fallback: FallbackEmbedder,
        };
        gw.add_embedder("fallback", Arc::new(FallbackEmbedder), false);
        gw
    }

    pub fn add_endpoint(&mut self, endpoint: ModelEndpoint, provider: Arc<dyn ChatProvider>) {
        let slot = EndpointSlot {
            permits: Semaphore::new(endpoint.max_in_flight.max(1)),
            endpoint,
            provider,
            network_calls: AtomicU64::new(0),
        };
        self.endpoints
            .insert(slot.endpoint.id.clone(), Arc::new(slot));
    }

    pub fn with_endpoint(mut self, endpoint: ModelEndpoint, provider: Arc<dyn ChatProvider>) -> Self {
        self.add_endpoint(endpoint, provider);
        self
    }

    pub fn add_embedder(
        &mut self,
        id: impl Into<String>,
        provider: Arc<dyn EmbeddingProvider>,
        allow_fallback: bool,
    ) {
        self.embedders.insert(
            id.into(),
            EmbedderSlot {
                provider,
                allow_fallback,
            },
        );
    }

    pub fn with_embedder(
        mut self,
        id: impl Into<String>,
        provider: Arc<dyn EmbeddingProvider>,
        allow_fallback: bool,
    ) -> Self {
        self.add_embedder(id, provider, allow_fallback);
        self
    }

    pub fn endpoint(&self, id: &str) -> Result<&ModelEndpoint, GatewayError> {
        self.endpoints
            .get(id)
            .map(|s| &s.endpoint)
            .ok_or_else(|| GatewayError::UnknownEndpoint(id.to_owned()))
    }

    pub fn has_embedder(&self, id: &str) -> bool {
        self.embedders.contains_key(id)
    }

    /// Number of provider invocations (cache misses, including retries).
    pub fn network_calls(&self, endpoint_id: &str) -> u64 {
        self.endpoints
            .get(endpoint_id)
            .map_or(0, |s| s.network_calls.load(Ordering::SeqCst))
    }

    pub async fn prepare(
        &self,
        endpoint_id: &str,
        request: &ChatRequest,
    ) -> Result<PreparedRequest, GatewayError> {
        let slot = self
            .endpoints
            .get(endpoint_id)
            .ok_or_else(|| GatewayError::UnknownEndpoint(endpoint_id.to_owned()))?;
        if request.parts.is_empty() {
            return Err(GatewayError::EmptyRequest);
        }
        if request.max_output_tokens > MAX_OUTPUT_TOKENS {
            return Err(GatewayError::BudgetExceeded {
                requested: request.max_output_tokens,
                limit: MAX_OUTPUT_TOKENS,
            });
        }
        let mut parts = Vec::with_capacity(request.parts.len());
        for p in &request.parts {
            parts.push(match p {
                Part::Text(t) => PreparedPart::Text(t.clone()),
                Part::Image(img) => {
                    let bytes = tokio::fs::read(img.path()).await.map_err(|source| {
                        crate::trajectory::ImageError::Read {
                            path: img.path().to_path_buf(),
                            source,
                        }
                    })?;
                    PreparedPart::Image {
                        sha256: hex::encode(Sha256::digest(&bytes)),
                        bytes: Arc::new(bytes),
                    }
                }
            });
        }
        let key = request_key(
            &slot.endpoint,
            &parts,
            request.temperature,
            request.max_output_tokens,
        );
        Ok(PreparedRequest {
            key,
            parts,
            temperature: request.temperature,
            max_output_tokens: request.max_output_tokens,
        })
    }

    pub async fn chat(&self, endpoint_id: &str, request: &ChatRequest) -> Result<String, GatewayError> {
        let prepared = self.prepare(endpoint_id, request).await?;
        self.chat_prepared(endpoint_id, &prepared).await
    }

    pub async fn chat_prepared(
        &self,
        endpoint_id: &str,
        prepared: &PreparedRequest,
    ) -> Result<String, GatewayError> {
        let slot = self
            .endpoints
            .get(endpoint_id)
            .ok_or_else(|| GatewayError::UnknownEndpoint(endpoint_id.to_owned()))?;
        if let Some(hit) = self.cache.get(endpoint_id, &prepared.key).await? {
            return Ok(hit);
        }
        let ep = &slot.endpoint;
        let mut last: Option<GatewayError> = None;
        for attempt in 0..=ep.max_retries {
            if attempt > 0 {
                let backoff = ep.retry_base.saturating_mul(1u32 << (attempt - 1).min(16));
                tokio::time::sleep(backoff).await;
            }
            let outcome = {
                let _permit = slot.permits.acquire().await.expect("semaphore never closed");
                slot.network_calls.fetch_add(1, Ordering::SeqCst);
                tokio::time::timeout(ep.timeout, slot.provider.complete(ep, prepared)).await
            };
            match outcome {
                Ok(Ok(text)) => {
                    self.cache.put(endpoint_id, &prepared.key, &text).await?;
                    return Ok(text);
                }
                Ok(Err(ProviderError::Auth(message))) => {
                    return Err(GatewayError::Auth {
                        key: prepared.key.clone(),
                        message,
                    });
                }
                Ok(Err(ProviderError::Fatal(message))) => {
                    return Err(GatewayError::Endpoint {
                        key: prepared.key.clone(),
                        message,
                    });
                }
                Ok(Err(ProviderError::Transient(message))) => {
                    tracing::warn!(endpoint = endpoint_id, attempt, %message, "transient failure");
                    last = Some(GatewayError::Endpoint {
                        key: prepared.key.clone(),
                        message,
                    });
                }
                Err(_) => {
                    tracing::warn!(endpoint = endpoint_id, attempt, "request timed out");
                    last = Some(GatewayError::Timeout {
                        key: prepared.key.clone(),
                    });
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Unit-norm embedding of `image` under `provider_id`.
    pub async fn embed(&self, provider_id: &str, image: &StateImage) -> Result<Arc<[f64]>, GatewayError> {
        let slot = self
            .embedders
            .get(provider_id)
            .ok_or_else(|| GatewayError::UnknownProvider(provider_id.to_owned()))?;
        let bytes = tokio::fs::read(image.path()).await.map_err(|source| {
            crate::trajectory::ImageError::Read {
                path: image.path().to_path_buf(),
                source,
            }
        })?;
        let hash = hex::encode(Sha256::digest(&bytes));
        let key = (provider_id.to_owned(), hash);
        if let Some(v) = self.embeddings.lock().expect("poisoned").get(&key) {
            return Ok(v.clone());
        }
        let raw = match slot.provider.embed(&bytes).await {
            Ok(v) => v,
            Err(EmbedError::ProviderUnavailable(msg)) if slot.allow_fallback => {
                tracing::warn!(provider = provider_id, %msg, "provider unavailable, using fallback");
                self.fallback.embed(&bytes).await?
            }
            Err(e) => return Err(e.into()),
        };
        let v: Arc<[f64]> = Arc::from(embed::normalize(raw)?);
        self.embeddings
            .lock()
            .expect("poisoned")
            .insert(key, v.clone());
        Ok(v)
    }

    /// Cosine similarity of two images under one provider.
    pub async fn similarity(
        &self,
        provider_id: &str,
        a: &StateImage,
        b: &StateImage,
    ) -> Result<f64, GatewayError> {
        let (ea, eb) = futures::try_join!(self.embed(provider_id, a), self.embed(provider_id, b))?;
        Ok(crate::scalar::cosine(&ea, &eb).unwrap_or(0.0))
    }
}
