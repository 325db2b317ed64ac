use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::jsonx::strip_fences;

pub const REASONING_MARKER: &str = "Next State Reasoning:";
pub const HTML_MARKER: &str = "HTML:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no reasoning/HTML structure found in model output")]
pub struct ParseFail;

static LINE_HTML: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^HTML:").unwrap());
static TAG_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)<(!doctype|[a-z][a-z0-9-]*)(\s|/|>)").unwrap());

/// Whether `text` has a line beginning with the `HTML:` delimiter.
pub fn has_line_initial_html(text: &str) -> bool {
    LINE_HTML.is_match(text)
}

/// The assistant-turn layout: reasoning, blank line, then the document.
pub fn format_wm_output(reasoning: &str, html: &str) -> String {
    format!("{REASONING_MARKER} {reasoning}\n\n{HTML_MARKER} {html}")
}

fn clean_html(s: &str) -> String {
    let t = s.trim();
    if t.starts_with("```") {
        strip_fences(t).unwrap_or(t).trim().to_owned()
    } else {
        t.to_owned()
    }
}

/// Splits raw world-model output into `(reasoning, html)`.
///
/// With markers, reasoning runs from the first `Next State Reasoning:` to
/// the first later line that starts with `HTML:`, and the rest is the
/// document. Without them, a fenced block or else the longest suffix that
/// starts at a tag is taken as the document.
pub fn parse_wm_output(raw: &str) -> Result<(String, String), ParseFail> {
    let (head_end, body) = match raw.find(REASONING_MARKER) {
        Some(i) => (Some(i), &raw[i + REASONING_MARKER.len()..]),
        None => (None, raw),
    };
    if let Some(m) = LINE_HTML.find(body) {
        let reasoning = body[..m.start()].trim().to_owned();
        let html = clean_html(&body[m.end()..]);
        return Ok((reasoning, html));
    }
    if head_end.is_some() {
        if let Some(html) = fallback_html(body) {
            let reasoning = body[..html.0].trim().to_owned();
            return Ok((reasoning, html.1));
        }
        return Err(ParseFail);
    }
    match fallback_html(raw) {
        Some((start, html)) => Ok((raw[..start].trim().to_owned(), html)),
        None => Err(ParseFail),
    }
}

/// Start offset and cleaned document of the embedded HTML, if any.
fn fallback_html(text: &str) -> Option<(usize, String)> {
    if let Some(fence) = text.find("```") {
        if let Some(inner) = strip_fences(&text[fence..]) {
            if TAG_START.is_match(inner) {
                return Some((fence, inner.trim().to_owned()));
            }
        }
    }
    let m = TAG_START.find(text)?;
    Some((m.start(), text[m.start()..].trim().to_owned()))
}
