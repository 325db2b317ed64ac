//! Extraction of JSON values from free-form model output: code fences,
//! surrounding prose and raw control characters inside strings are tolerated.

use serde_json::{Map, Value};

/// Contents of the first fenced code block, if any. An unterminated fence
/// runs to the end of the text.
pub fn strip_fences(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let info = after[..body_start].trim();
    if info.contains(' ') {
        return None;
    }
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

/// Escapes raw newlines, carriage returns and tabs that appear inside
/// string literals.
pub fn escape_raw_controls(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    let mut in_str = false;
    let mut escaped = false;
    for c in text.chars() {
        if in_str {
            if escaped {
                escaped = false;
                out.push(c);
                continue;
            }
            match c {
                '\\' => {
                    escaped = true;
                    out.push(c);
                }
                '"' => {
                    in_str = false;
                    out.push(c);
                }
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
                c => out.push(c),
            }
        } else {
            if c == '"' {
                in_str = true;
            }
            out.push(c);
        }
    }
    out
}

fn first_object_in(text: &str) -> Option<Map<String, Value>> {
    if let Ok(Value::Object(m)) = serde_json::from_str::<Value>(text.trim()) {
        return Some(m);
    }
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(m))) = stream.next() {
            return Some(m);
        }
    }
    None
}

/// First JSON object found in `text`, trying in order: the whole text, the
/// first fenced block, any embedded object, then the same after escaping raw
/// control characters.
pub fn extract_object(text: &str) -> Option<Map<String, Value>> {
    let candidates = [Some(text), strip_fences(text)];
    for c in candidates.iter().flatten() {
        if let Some(m) = first_object_in(c) {
            return Some(m);
        }
    }
    for c in candidates.iter().flatten() {
        if let Some(m) = first_object_in(&escape_raw_controls(c)) {
            return Some(m);
        }
    }
    None
}

/// Case-insensitive key lookup.
pub fn get_ci<'a>(map: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.get(key)
        .or_else(|| map.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v))
}
