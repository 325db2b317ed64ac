use async_trait::async_trait;
use base64::Engine;
use base64::engine::general_purpose::STANDARD;
use serde_json::{Value, json};

use super::{
    ChatProvider, EmbedError, EmbeddingProvider, ModelEndpoint, PreparedPart, PreparedRequest,
    ProviderError,
};

fn mime(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(&[0xFF, 0xD8]) {
        "image/jpeg"
    } else {
        "image/png"
    }
}

/// OpenAI-compatible `/chat/completions` client.
#[derive(Debug, Clone, Default)]
pub struct HttpChatProvider {
    client: reqwest::Client,
}

impl HttpChatProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn request_body(endpoint: &ModelEndpoint, request: &PreparedRequest) -> Value {
        let content: Vec<Value> = request
            .parts
            .iter()
            .map(|p| match p {
                PreparedPart::Text(t) => json!({"type": "text", "text": t}),
                PreparedPart::Image { bytes, .. } => json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:{};base64,{}", mime(bytes), STANDARD.encode(bytes.as_slice()))}
                }),
            })
            .collect();
        json!({
            "model": endpoint.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }
}

#[async_trait]
impl ChatProvider for HttpChatProvider {
    async fn complete(&self, endpoint: &ModelEndpoint, request: &PreparedRequest) -> Result<String, ProviderError> {
        let base = endpoint
            .base_url
            .as_deref()
            .ok_or_else(|| ProviderError::Fatal(format!("endpoint {} has no base_url", endpoint.id)))?;
        let url = format!("{}/chat/completions", base.trim_end_matches('/'));
        let mut rb = self.client.post(url).json(&Self::request_body(endpoint, request));
        if let Some(var) = &endpoint.auth_env {
            let key = std::env::var(var)
                .map_err(|_| ProviderError::Auth(format!("environment variable {var} is not set")))?;
            rb = rb.bearer_auth(key);
        }
        let resp = rb
            .send()
            .await
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .await
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Err(ProviderError::Auth(format!("{status}: {body}"))),
            408 | 429 | 500..=599 => return Err(ProviderError::Transient(format!("{status}: {body}"))),
            _ => return Err(ProviderError::Fatal(format!("{status}: {body}"))),
        }
        let v: Value = serde_json::from_str(&body).map_err(|e| ProviderError::Fatal(e.to_string()))?;
        match &v["choices"][0]["message"]["content"] {
            Value::String(s) => Ok(s.clone()),
            Value::Array(parts) => Ok(parts
                .iter()
                .filter_map(|p| p["text"].as_str())
                .collect::<Vec<_>>()
                .join("")),
            _ => Err(ProviderError::Fatal(format!("no completion content in response: {body}"))),
        }
    }
}

/// Posts `{"model", "image": <base64>}` and expects `{"embedding": [...]}`
/// or `{"data": [{"embedding": [...]}]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: reqwest::Client,
    pub url: String,
    pub model_name: String,
    pub auth_env: Option<String>,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            url: url.into(),
            model_name: model_name.into(),
            auth_env: None,
        }
    }
}

#[async_trait]
impl EmbeddingProvider for HttpEmbedder {
    async fn embed(&self, image_bytes: &[u8]) -> Result<Vec<f64>, EmbedError> {
        let unavailable = |e: String| EmbedError::ProviderUnavailable(e);
        let mut rb = self.client.post(&self.url).json(&json!({
            "model": self.model_name,
            "image": STANDARD.encode(image_bytes),
        }));
        if let Some(var) = &self.auth_env {
            let key = std::env::var(var).map_err(|_| unavailable(format!("{var} is not set")))?;
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().await.map_err(|e| unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unavailable(format!("status {}", resp.status())));
        }
        let v: Value = resp.json().await.map_err(|e| unavailable(e.to_string()))?;
        let arr = v
            .get("embedding")
            .or_else(|| v.pointer("/data/0/embedding"))
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Malformed("no embedding array".into()))?;
        arr.iter()
            .map(|x| x.as_f64().ok_or_else(|| EmbedError::Malformed("non-numeric component".into())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn body_carries_images_as_data_urls() {
        let ep = ModelEndpoint::new("e", "m");
        let req = PreparedRequest {
            key: "k".into(),
            parts: vec![
                PreparedPart::Text("hi".into()),
                PreparedPart::Image {
                    sha256: "x".into(),
                    bytes: Arc::new(vec![0x89, b'P', b'N', b'G']),
                },
            ],
            temperature: 0.0,
            max_output_tokens: 100,
        };
        let body = HttpChatProvider::request_body(&ep, &req);
        assert_eq!(body["max_tokens"], 100);
        let url = body["messages"][0]["content"][1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
    }

    #[tokio::test]
    async fn unreachable_embedder_reports_unavailable() {
        let e = HttpEmbedder::new("http://127.0.0.1:9/embed", "m");
        assert!(matches!(
            e.embed(&[1, 2, 3]).await,
            Err(EmbedError::ProviderUnavailable(_))
        ));
    }
}
