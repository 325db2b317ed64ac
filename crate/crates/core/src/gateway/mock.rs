use std::path::Path;

use async_trait::async_trait;
use regex::Regex;
use serde::Deserialize;

use super::{ChatProvider, ModelEndpoint, PreparedRequest, ProviderError};

/// One scripted response. A rule matches when every given condition holds.
#[derive(Debug, Clone)]
pub struct MockRule {
    pub key_prefix: Option<String>,
    pub pattern: Option<Regex>,
    pub response: String,
}

/// Offline provider answering from an ordered rule list; the first matching
/// rule wins, then the default response, otherwise a fatal error.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    pub rules: Vec<MockRule>,
    pub default: Option<String>,
}

#[derive(Deserialize)]
struct ScriptFile {
    #[serde(default)]
    default: Option<String>,
    #[serde(default, rename = "rule")]
    rules: Vec<RuleRecord>,
}

#[derive(Deserialize)]
struct RuleRecord {
    #[serde(default)]
    key_prefix: Option<String>,
    #[serde(default)]
    pattern: Option<String>,
    response: String,
}

impl ScriptedProvider {
    pub fn constant(response: impl Into<String>) -> Self {
        Self {
            rules: Vec::new(),
            default: Some(response.into()),
        }
    }

    pub fn rule(mut self, pattern: &str, response: impl Into<String>) -> Self {
        self.rules.push(MockRule {
            key_prefix: None,
            pattern: Some(Regex::new(pattern).expect("valid mock pattern")),
            response: response.into(),
        });
        self
    }

    /// Parses a TOML script: optional `default` and `[[rule]]` tables with
    /// `pattern`, `key_prefix` and `response`.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let f: ScriptFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut rules = Vec::with_capacity(f.rules.len());
        for r in f.rules {
            let pattern = r
                .pattern
                .map(|p| Regex::new(&p).map_err(|e| e.to_string()))
                .transpose()?;
            rules.push(MockRule {
                key_prefix: r.key_prefix,
                pattern,
                response: r.response,
            });
        }
        Ok(Self {
            rules,
            default: f.default,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn respond(&self, request: &PreparedRequest) -> Option<&str> {
        let text = request.prompt_text();
        self.rules
            .iter()
            .find(|r| {
                r.key_prefix
                    .as_deref()
                    .is_none_or(|p| request.key.starts_with(p))
                    && r.pattern.as_ref().is_none_or(|re| re.is_match(&text))
            })
            .map(|r| r.response.as_str())
            .or(self.default.as_deref())
    }
}

#[async_trait]
impl ChatProvider for ScriptedProvider {
    async fn complete(&self, _: &ModelEndpoint, request: &PreparedRequest) -> Result<String, ProviderError> {
        self.respond(request)
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::Fatal(format!("no scripted response for {}", request.key)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::PreparedPart;

    fn req(text: &str) -> PreparedRequest {
        PreparedRequest {
            key: "abc123".into(),
            parts: vec![PreparedPart::Text(text.into())],
            temperature: 0.0,
            max_output_tokens: 10,
        }
    }

    #[test]
    fn first_matching_rule_wins() {
        let p = ScriptedProvider::from_toml(
            r#"
            default = "fallback"
            [[rule]]
            pattern = "Status"
            response = "judge"
            [[rule]]
            key_prefix = "abc"
            response = "by key"
            "#,
        )
        .unwrap();
        assert_eq!(p.respond(&req("give Status")), Some("judge"));
        assert_eq!(p.respond(&req("other")), Some("by key"));
        let mut r = req("other");
        r.key = "zzz".into();
        assert_eq!(p.respond(&r), Some("fallback"));
    }
}
