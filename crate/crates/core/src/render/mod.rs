//! Renders generated HTML in a mobile viewport and classifies the outcome.

mod assets;
mod browser;
mod synthetic;

use std::path::Path;
use std::sync::LazyLock;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::StateImage;

pub use assets::{Asset, AssetManifest};
pub use browser::{BrowserPool, PoolConfig, browser_processes, find_browser};
pub use synthetic::{SyntheticCapture, synthetic_png};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub width_px: u32,
    pub height_px: u32,
    pub device_scale: f64,
}

impl Viewport {
    pub fn new(width_px: u32, height_px: u32) -> Self {
        Self {
            width_px,
            height_px,
            device_scale: 1.0,
        }
    }

    /// Viewport matching a reference screenshot.
    pub fn for_image(image: &StateImage) -> Self {
        Self::new(image.width_px, image.height_px)
    }

    /// Parses `WIDTHxHEIGHT` or `WIDTHxHEIGHT@SCALE`.
    pub fn parse(s: &str) -> Option<Self> {
        let (dims, scale) = match s.split_once('@') {
            Some((d, sc)) => (d, sc.parse().ok()?),
            None => (s, 1.0),
        };
        let (w, h) = dims.split_once(['x', 'X'])?;
        let vp = Self {
            width_px: w.trim().parse().ok()?,
            height_px: h.trim().parse().ok()?,
            device_scale: scale,
        };
        vp.is_valid().then_some(vp)
    }

    pub fn is_valid(&self) -> bool {
        self.width_px > 0 && self.height_px > 0 && self.device_scale > 0.0 && self.device_scale.is_finite()
    }

    /// Pixel size of a capture at this viewport.
    pub fn capture_size(&self) -> (u32, u32) {
        (
            (f64::from(self.width_px) * self.device_scale).round() as u32,
            (f64::from(self.height_px) * self.device_scale).round() as u32,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticFail {
    Empty,
    NoElements,
    ParseFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "reason")]
pub enum StaticVerdict {
    Pass,
    Fail(StaticFail),
}

impl StaticVerdict {
    pub fn passed(self) -> bool {
        self == StaticVerdict::Pass
    }
}

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[A-Za-z][A-Za-z0-9-]*(\s|/|>)").unwrap());

/// Cheap pre-render gate.
pub fn renderability_check(html: &str) -> StaticVerdict {
    if html.trim().is_empty() {
        return StaticVerdict::Fail(StaticFail::Empty);
    }
    if !TAG.is_match(html) {
        return StaticVerdict::Fail(StaticFail::NoElements);
    }
    let doc = scraper::Html::parse_document(html);
    let body_sel = scraper::Selector::parse("body").expect("static selector");
    let non_empty = doc.select(&body_sel).next().is_some_and(|body| {
        body.children().any(|c| match c.value() {
            scraper::Node::Element(_) => true,
            scraper::Node::Text(t) => !t.trim().is_empty(),
            _ => false,
        })
    });
    if non_empty {
        StaticVerdict::Pass
    } else {
        StaticVerdict::Fail(StaticFail::ParseFail)
    }
}

static DOC_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)<(html|body|!doctype)[\s>]").unwrap());

/// Wraps markup lacking a document skeleton. Returns the document and
/// whether wrapping happened.
pub fn normalize_document(html: &str) -> (String, bool) {
    if DOC_MARKER.is_match(html) {
        (html.to_owned(), false)
    } else {
        (
            format!(
                "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><meta name=\"viewport\" content=\"width=device-width, initial-scale=1\"></head>\n<body>\n{html}\n</body></html>\n"
            ),
            true,
        )
    }
}

/// Share of pixels that must carry the dominant color for a blank verdict.
pub const BLANK_SHARE: f64 = 0.995;

/// True when at least [`BLANK_SHARE`] of the pixels have one RGBA value.
pub fn is_blank(img: &image::RgbaImage) -> bool {
    let total = img.pixels().len();
    if total == 0 {
        return true;
    }
    // Boyer-Moore majority vote; a color above 99.5% is necessarily the majority.
    let mut candidate = [0u8; 4];
    let mut count = 0usize;
    for p in img.pixels() {
        if count == 0 {
            candidate = p.0;
            count = 1;
        } else if p.0 == candidate {
            count += 1;
        } else {
            count -= 1;
        }
    }
    let share = img.pixels().filter(|p| p.0 == candidate).count();
    share as f64 >= BLANK_SHARE * total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderVerdict {
    Ok,
    ParseFail,
    NavFail,
    BlankRender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResult {
    pub screenshot: Option<StateImage>,
    pub verdict: RenderVerdict,
    pub elapsed_ms: f64,
    /// Markup was wrapped in a document skeleton before loading.
    #[serde(default)]
    pub wrapped: bool,
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("browser unavailable: {0}")]
    BrowserUnavailable(String),
    #[error("page did not settle within {0:?}")]
    Timeout(Duration),
    #[error("navigation failed: {0}")]
    Navigation(String),
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("browser unavailable: {0}")]
    BrowserUnavailable(String),
    #[error("invalid viewport {0:?}")]
    InvalidViewport(Viewport),
    #[error("writing {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// Something that turns a complete HTML document into PNG bytes.
#[async_trait]
pub trait PageCapture: Send + Sync {
    async fn capture(&self, document: &str, viewport: Viewport) -> Result<Vec<u8>, CaptureError>;
}

/// Checks, normalizes, loads and captures `html`, writing the screenshot to
/// `out` when the page loaded.
pub async fn render_html(
    capture: &dyn PageCapture,
    html: &str,
    viewport: Viewport,
    out: &Path,
) -> Result<RenderResult, RenderError> {
    let start = Instant::now();
    if !viewport.is_valid() {
        return Err(RenderError::InvalidViewport(viewport));
    }
    let elapsed = |s: Instant| s.elapsed().as_secs_f64() * 1e3;
    if !renderability_check(html).passed() {
        return Ok(RenderResult {
            screenshot: None,
            verdict: RenderVerdict::ParseFail,
            elapsed_ms: elapsed(start),
            wrapped: false,
        });
    }
    let (document, wrapped) = normalize_document(html);
    let png = match capture.capture(&document, viewport).await {
        Ok(png) => png,
        Err(CaptureError::BrowserUnavailable(m)) => return Err(RenderError::BrowserUnavailable(m)),
        Err(e) => {
            tracing::debug!(error = %e, "render navigation failure");
            return Ok(RenderResult {
                screenshot: None,
                verdict: RenderVerdict::NavFail,
                elapsed_ms: elapsed(start),
                wrapped,
            });
        }
    };
    let decoded = tokio::task::spawn_blocking(move || {
        image::load_from_memory(&png).map(|img| {
            let rgba = img.to_rgba8();
            let blank = is_blank(&rgba);
            (png, rgba.width(), rgba.height(), blank)
        })
    })
    .await
    .expect("decode task panicked");
    let (png, w, h, blank) = match decoded {
        Ok(v) => v,
        Err(e) => {
            tracing::debug!(error = %e, "undecodable capture");
            return Ok(RenderResult {
                screenshot: None,
                verdict: RenderVerdict::NavFail,
                elapsed_ms: elapsed(start),
                wrapped,
            });
        }
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        tokio::fs::create_dir_all(dir).await.map_err(|source| RenderError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    tokio::fs::write(out, &png).await.map_err(|source| RenderError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(RenderResult {
        screenshot: Some(StateImage::new(out, w, h)),
        verdict: if blank { RenderVerdict::BlankRender } else { RenderVerdict::Ok },
        elapsed_ms: elapsed(start),
        wrapped,
    })
}
