//! Parsing model answers.
//!
//! Closed-strategy answers are searched for the first balanced `{...}` span
//! that decodes (after light repair) into an object carrying at least one
//! schema key. Open-strategy answers are cleaned of fences, quotes and
//! leading labels.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::render::{DescriptionOrigin, StyleDescription, MAX_DESCRIPTION_CHARS};
use crate::schema::{collapse_ws, normalize_label, AttributeValue, StyleSchema, VoiceAttributeRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON object with schema attributes found in response")]
    NoObjectFound,
    #[error("response is empty after cleanup")]
    EmptyAfterCleanup,
}

/// Byte ranges of balanced brace spans, in order of their opening brace.
/// Quotes are tracked so braces inside JSON strings do not count.
fn balanced_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    for (start, _) in text.match_indices('{') {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (offset, &b) in bytes[start..].iter().enumerate() {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        spans.push((start, start + offset + 1));
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    spans
}

fn regex(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).unwrap())
}

/// Decodes a candidate object, applying increasingly aggressive repairs:
/// trailing commas, typographic quotes, single quotes, unquoted keys.
fn decode_object(candidate: &str) -> Option<Map<String, Value>> {
    static TRAILING_COMMA: OnceLock<Regex> = OnceLock::new();
    static BARE_KEY: OnceLock<Regex> = OnceLock::new();

    let try_decode = |s: &str| match serde_json::from_str::<Value>(s) {
        Ok(Value::Object(map)) => Some(map),
        _ => None,
    };
    if let Some(map) = try_decode(candidate) {
        return Some(map);
    }
    let mut repaired = regex(&TRAILING_COMMA, r",\s*([}\]])")
        .replace_all(candidate, "$1")
        .into_owned();
    if let Some(map) = try_decode(&repaired) {
        return Some(map);
    }
    repaired = repaired.replace(['\u{201c}', '\u{201d}'], "\"");
    if !repaired.contains('"') {
        repaired = repaired.replace('\'', "\"");
    }
    if let Some(map) = try_decode(&repaired) {
        return Some(map);
    }
    repaired = regex(&BARE_KEY, r#"([{,]\s*)([A-Za-z_][A-Za-z0-9_ ]*?)\s*:"#)
        .replace_all(&repaired, "$1\"$2\":")
        .into_owned();
    try_decode(&repaired)
}

fn slot_string(value: &Value) -> Option<String> {
    match value {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(slot_string).collect();
            (!parts.is_empty()).then(|| parts.join(", "))
        }
        Value::Object(map) => {
            let field = |names: &[&str]| {
                names
                    .iter()
                    .find_map(|n| map.iter().find(|(k, _)| k.eq_ignore_ascii_case(n)))
                    .and_then(|(_, v)| slot_string(v))
            };
            let label = field(&["label", "value", "canonical"])?;
            Some(match field(&["evidence", "reason"]) {
                Some(ev) => format!("{label} ({ev})"),
                None => label,
            })
        }
    }
}

fn folded(map: &Map<String, Value>) -> Vec<(String, &Value)> {
    map.iter()
        .map(|(k, v)| (k.trim().to_lowercase().replace([' ', '-'], "_"), v))
        .collect()
}

fn has_schema_key(map: &Map<String, Value>, schema: &StyleSchema) -> bool {
    folded(map).iter().any(|(k, _)| schema.dimension(k).is_some())
}

/// The object itself, or a nested object one level down, that carries schema keys.
fn attribute_object<'a>(map: &'a Map<String, Value>, schema: &StyleSchema) -> Option<&'a Map<String, Value>> {
    if has_schema_key(map, schema) {
        return Some(map);
    }
    map.values().find_map(|v| match v {
        Value::Object(inner) if has_schema_key(inner, schema) => Some(inner),
        _ => None,
    })
}

fn record_from_object(map: &Map<String, Value>, schema: &StyleSchema) -> VoiceAttributeRecord {
    let mut record = VoiceAttributeRecord::new(String::new(), schema);
    let entries = folded(map);
    for dim in &schema.dimensions {
        let raw = entries
            .iter()
            .find(|(k, _)| *k == dim.name)
            .and_then(|(_, v)| slot_string(v))
            .filter(|s| !s.trim().is_empty());
        match raw {
            Some(raw) => {
                let value = normalize_label(dim, &raw).expect("raw is non-empty");
                record.insert(value);
            }
            None if dim.is_closed() => record.insert(AttributeValue::unspecified(&dim.name)),
            None => {}
        }
    }
    record
}

/// Extracts a [`VoiceAttributeRecord`] from a closed-strategy answer.
///
/// The returned record has an empty `persona_id`; callers set it.
pub fn parse_closed_response(text: &str, schema: &StyleSchema) -> Result<VoiceAttributeRecord, ParseError> {
    let mut saw_empty = false;
    for (start, end) in balanced_spans(text) {
        let Some(map) = decode_object(&text[start..end]) else {
            continue;
        };
        if let Some(object) = attribute_object(&map, schema) {
            return Ok(record_from_object(object, schema));
        }
        saw_empty |= map.is_empty();
    }
    // An empty object leaves every closed dimension unspecified.
    if saw_empty {
        return Ok(record_from_object(&Map::new(), schema));
    }
    Err(ParseError::NoObjectFound)
}

fn strip_fences(text: &str) -> String {
    text.lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn strip_quotes(text: &str) -> &str {
    const PAIRS: [(char, char); 5] = [
        ('"', '"'),
        ('\'', '\''),
        ('\u{201c}', '\u{201d}'),
        ('`', '`'),
        ('*', '*'),
    ];
    for (open, close) in PAIRS {
        if let Some(inner) = text.strip_prefix(open).and_then(|t| t.strip_suffix(close)) {
            return inner.trim();
        }
    }
    text
}

fn truncate_description(text: &str) -> String {
    if text.chars().count() <= MAX_DESCRIPTION_CHARS {
        return text.to_string();
    }
    let cut: String = text.chars().take(MAX_DESCRIPTION_CHARS).collect();
    let sentence_end = cut
        .match_indices(['.', '!', '?'])
        .map(|(i, _)| i + 1)
        .rfind(|&i| i == cut.len() || cut[i..].starts_with(' '));
    match sentence_end.or_else(|| cut.rfind(' ')) {
        Some(i) if i > 0 => cut[..i].trim_end().to_string(),
        _ => cut,
    }
}

/// Cleans free text into description form: no fences, quotes, leading
/// labels, control characters or repeated whitespace; at most 500 characters.
pub fn clean_description(text: &str) -> Result<String, ParseError> {
    static LABEL: OnceLock<Regex> = OnceLock::new();
    let label = regex(
        &LABEL,
        r"(?i)^(?:\*\*)?\s*(?:voice\s+style\s+description|voice\s+description|style\s+description|description|voice\s+style|style|output|answer)\s*(?:\*\*)?\s*:\s*(?:\*\*)?",
    );
    let no_control: String = strip_fences(text)
        .chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect();
    let mut current = collapse_ws(&no_control);
    loop {
        let mut next = label.replace(&current, "").trim().to_string();
        next = strip_quotes(&next).to_string();
        if next == current {
            break;
        }
        current = next;
    }
    if current.is_empty() {
        return Err(ParseError::EmptyAfterCleanup);
    }
    Ok(truncate_description(&current))
}

/// Cleans an open-strategy answer into a [`StyleDescription`].
pub fn parse_open_response(text: &str) -> Result<StyleDescription, ParseError> {
    let cleaned = clean_description(text)?;
    StyleDescription::new(cleaned, DescriptionOrigin::OpenStrategy).map_err(|_| ParseError::EmptyAfterCleanup)
}
