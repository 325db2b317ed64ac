use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Asset {
    pub content_type: String,
    pub body: Arc<Vec<u8>>,
}

/// Local stand-ins for remote stylesheets and scripts, keyed by URL.
///
/// ```toml
/// [[asset]]
/// url = "https://cdn.tailwindcss.com"
/// path = "tailwind.js"
/// prefix = true
/// ```
#[derive(Debug, Clone, Default)]
pub struct AssetManifest {
    exact: HashMap<String, Asset>,
    prefixes: Vec<(String, Asset)>,
}

#[derive(Deserialize)]
struct ManifestFile {
    #[serde(default, rename = "asset")]
    assets: Vec<Entry>,
}

#[derive(Deserialize)]
struct Entry {
    url: String,
    path: PathBuf,
    #[serde(default)]
    content_type: Option<String>,
    #[serde(default)]
    prefix: bool,
}

fn guess_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "css" => "text/css",
        "js" | "mjs" => "application/javascript",
        "woff2" => "font/woff2",
        "woff" => "font/woff",
        "ttf" => "font/ttf",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        _ => "application/octet-stream",
    }
}

fn strip_query(url: &str) -> &str {
    url.split(['?', '#']).next().unwrap_or(url)
}

impl AssetManifest {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let file: ManifestFile = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut m = Self::default();
        for e in file.assets {
            let p = if e.path.is_relative() { base.join(&e.path) } else { e.path.clone() };
            let body = std::fs::read(&p).map_err(|err| format!("{}: {err}", p.display()))?;
            let asset = Asset {
                content_type: e.content_type.unwrap_or_else(|| guess_type(&p).to_owned()),
                body: Arc::new(body),
            };
            m.insert(e.url, asset, e.prefix);
        }
        Ok(m)
    }

    pub fn insert(&mut self, url: impl Into<String>, asset: Asset, prefix: bool) {
        let url = url.into();
        if prefix {
            self.prefixes.push((url, asset));
            self.prefixes.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        } else {
            self.exact.insert(url, asset);
        }
    }

    pub fn lookup(&self, url: &str) -> Option<&Asset> {
        self.exact
            .get(url)
            .or_else(|| self.exact.get(strip_query(url)))
            .or_else(|| {
                self.prefixes
                    .iter()
                    .find(|(p, _)| url.starts_with(p.as_str()))
                    .map(|(_, a)| a)
            })
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.prefixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_and_match() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.css"), "body{}").unwrap();
        std::fs::write(dir.path().join("t.js"), "//").unwrap();
        let mf = dir.path().join("assets.toml");
        std::fs::write(
            &mf,
            r#"
[[asset]]
url = "https://cdn.example/b.css"
path = "b.css"
[[asset]]
url = "https://cdn.tailwindcss.com"
path = "t.js"
prefix = true
"#,
        )
        .unwrap();
        let m = AssetManifest::load(&mf).unwrap();
        assert_eq!(m.lookup("https://cdn.example/b.css?v=1").unwrap().content_type, "text/css");
        assert!(m.lookup("https://cdn.tailwindcss.com/3.4?plugins=forms").is_some());
        assert!(m.lookup("https://elsewhere/x.css").is_none());
    }
}
