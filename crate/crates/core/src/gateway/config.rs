use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::{
    FallbackEmbedder, Gateway, HttpChatProvider, HttpEmbedder, ModelEndpoint, ResponseCache,
    ScriptedProvider,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    #[default]
    Http,
    Fallback,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EndpointConfig {
    pub id: String,
    #[serde(default)]
    pub kind: EndpointKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_base")]
    pub retry_base_ms: u64,
    /// Rule file for `kind = "mock"`.
    #[serde(default)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EmbeddingConfig {
    pub id: String,
    #[serde(default)]
    pub kind: EmbeddingKind,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub allow_fallback: bool,
}

fn default_in_flight() -> usize {
    4
}
fn default_timeout() -> f64 {
    300.0
}
fn default_retries() -> u32 {
    3
}
fn default_retry_base() -> u64 {
    500
}

/// Gateway settings, usually loaded from a TOML file:
///
/// ```toml
/// cache_dir = "cache"
///
/// [[endpoint]]
/// id = "frontier"
/// base_url = "https://api.example.com/v1"
/// model_name = "some-vlm"
/// auth_env = "API_KEY"
///
/// [[embedding]]
/// id = "layout"
/// kind = "fallback"
/// ```
#[derive(Debug, Clone, Deserialize, Default)]
pub struct GatewayConfig {
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, rename = "endpoint")]
    pub endpoints: Vec<EndpointConfig>,
    #[serde(default, rename = "embedding")]
    pub embeddings: Vec<EmbeddingConfig>,
}

impl GatewayConfig {
    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| invalid(e.to_string()))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = cfg.cache_dir.as_mut().filter(|d| d.is_relative()) {
            *d = base.join(&*d);
        }
        for ep in &mut cfg.endpoints {
            if let Some(s) = ep.script.as_mut().filter(|s| s.is_relative()) {
                *s = base.join(&*s);
            }
        }
        Ok(cfg)
    }

    pub fn build(&self) -> Result<Gateway, ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            path: PathBuf::from("<gateway config>"),
            message,
        };
        let cache = match &self.cache_dir {
            Some(d) => ResponseCache::disk(d),
            None => ResponseCache::memory(),
        };
        let mut gw = Gateway::new(cache);
        let http = Arc::new(HttpChatProvider::new());
        for ep in &self.endpoints {
            let endpoint = ModelEndpoint {
                id: ep.id.clone(),
                base_url: ep.base_url.clone(),
                model_name: ep.model_name.clone(),
                auth_env: ep.auth_env.clone(),
                max_in_flight: ep.max_in_flight,
                timeout: Duration::from_secs_f64(ep.timeout_secs),
                max_retries: ep.max_retries,
                retry_base: Duration::from_millis(ep.retry_base_ms),
            };
            match ep.kind {
                EndpointKind::Http => {
                    if ep.base_url.is_none() {
                        return Err(invalid(format!("endpoint {} needs base_url", ep.id)));
                    }
                    gw.add_endpoint(endpoint, http.clone());
                }
                EndpointKind::Mock => {
                    let provider = match &ep.script {
                        Some(p) => ScriptedProvider::from_file(p).map_err(invalid)?,
                        None => ScriptedProvider::default(),
                    };
                    gw.add_endpoint(endpoint, Arc::new(provider));
                }
            }
        }
        for em in &self.embeddings {
            match em.kind {
                EmbeddingKind::Fallback => gw.add_embedder(&em.id, Arc::new(FallbackEmbedder), false),
                EmbeddingKind::Http => {
                    let url = em
                        .url
                        .clone()
                        .ok_or_else(|| invalid(format!("embedding {} needs url", em.id)))?;
                    let mut e = HttpEmbedder::new(url, em.model_name.clone());
                    e.auth_env = em.auth_env.clone();
                    gw.add_embedder(&em.id, Arc::new(e), em.allow_fallback);
                }
            }
        }
        Ok(gw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_builds() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("mock.toml"), "default = \"OK\"\n").unwrap();
        let path = dir.path().join("gw.toml");
        std::fs::write(
            &path,
            r#"
cache_dir = "cache"
[[endpoint]]
id = "m"
kind = "mock"
model_name = "mock"
script = "mock.toml"
[[endpoint]]
id = "h"
base_url = "http://localhost:1/v1"
model_name = "x"
[[embedding]]
id = "e"
url = "http://localhost:1/embed"
allow_fallback = true
"#,
        )
        .unwrap();
        let cfg = GatewayConfig::load(&path).unwrap();
        assert_eq!(cfg.cache_dir.as_deref(), Some(dir.path().join("cache").as_path()));
        let gw = cfg.build().unwrap();
        assert_eq!(gw.endpoint("h").unwrap().model_name, "x");
        assert!(gw.has_embedder("e"));
        assert!(gw.has_embedder("fallback"));
    }
}
