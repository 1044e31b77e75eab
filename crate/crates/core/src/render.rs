//! Turning attribute records into TTS-ready style descriptions.
//!
//! The template renderer follows one fixed grammar:
//!
//! ```text
//! A[n] {accent}-accented {gender} voice, {pitch}-pitched, speaking at a {speed} pace
//! with a {tone} tone[, {prosody} delivery][, and a {timbre} timbre].
//! ```
//!
//! Every clause whose slot is `Unspecified` is dropped together with its
//! connective text, so an all-`Unspecified` record renders as `A voice.`
//! Labels are lowercased inside the sentence except accent names; speed
//! renders as an adverb (`slow`, `measured`, `brisk`).

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ChatClient, ChatSettings, ClientError};
use crate::convert::parse::clean_description;
use crate::prompts::PromptTemplates;
use crate::schema::{
    collapse_ws, validate_record, AttributeDimension, StyleSchema, ValidationReport, VoiceAttributeRecord, OTHER,
    UNSPECIFIED,
};

pub const MAX_DESCRIPTION_CHARS: usize = 500;
const MAX_OPEN_SLOT_CHARS: usize = 80;
const MAX_OTHER_LABEL_CHARS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionOrigin {
    Template,
    LlmParaphrase,
    OpenStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleDescription {
    pub text: String,
    pub origin: DescriptionOrigin,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DescriptionError {
    #[error("description is empty")]
    Empty,
    #[error("description has {0} characters (max {MAX_DESCRIPTION_CHARS})")]
    TooLong(usize),
    #[error("description contains control characters or line breaks")]
    ControlCharacter,
}

impl StyleDescription {
    pub fn new(text: impl Into<String>, origin: DescriptionOrigin) -> Result<Self, DescriptionError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DescriptionError::Empty);
        }
        let chars = text.chars().count();
        if chars > MAX_DESCRIPTION_CHARS {
            return Err(DescriptionError::TooLong(chars));
        }
        if text.chars().any(char::is_control) {
            return Err(DescriptionError::ControlCharacter);
        }
        Ok(Self { text, origin })
    }
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("record fails validation: {0:?}")]
    InvalidRecord(ValidationReport),
    #[error(transparent)]
    Transport(#[from] ClientError),
}

fn article(next: &str) -> &'static str {
    match next.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn clip(text: &str, max: usize) -> String {
    let clean: String = text.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
    let clean = collapse_ws(&clean);
    if clean.chars().count() <= max {
        return clean;
    }
    let cut: String = clean.chars().take(max).collect();
    match cut.rfind(' ') {
        Some(i) if i > 0 => cut[..i].trim_end_matches([',', ';']).to_string(),
        _ => cut,
    }
}

/// Display text for one slot, `None` when the slot is absent or unspecified.
fn slot_text(record: &VoiceAttributeRecord, schema: &StyleSchema, dimension: &str) -> Option<String> {
    let value = record.get(dimension)?;
    let dim = schema.dimension(dimension)?;
    if value.is_unspecified() {
        return None;
    }
    if !dim.is_closed() {
        let text = clip(&value.canonical, MAX_OPEN_SLOT_CHARS).to_lowercase();
        return (!text.is_empty()).then_some(text);
    }
    let keep_case = dimension == "accent";
    let label = if value.canonical == OTHER {
        let surface = clip(&value.surface(), MAX_OTHER_LABEL_CHARS);
        if surface.is_empty() {
            OTHER.to_string()
        } else {
            surface
        }
    } else {
        value.canonical.clone()
    };
    Some(if keep_case { label } else { label.to_lowercase() })
}

fn speed_adverb(label: &str) -> String {
    match label {
        "slow" => "slow".to_string(),
        "normal" => "measured".to_string(),
        "fast" => "brisk".to_string(),
        other => other.to_string(),
    }
}

/// Deterministic template rendering of a valid record.
pub fn render_template(record: &VoiceAttributeRecord, schema: &StyleSchema) -> Result<StyleDescription, RenderError> {
    let report = validate_record(record, schema);
    if !report.is_empty() {
        return Err(RenderError::InvalidRecord(report));
    }
    let slot = |d: &str| slot_text(record, schema, d);

    let mut head = Vec::new();
    if let Some(accent) = slot("accent") {
        head.push(format!("{accent}-accented"));
    }
    if let Some(gender) = slot("gender") {
        head.push(gender);
    }
    head.push("voice".to_string());
    let head = head.join(" ");
    let lead = article(&head);
    let mut text = format!("{}{} {head}", lead[..1].to_uppercase(), &lead[1..]);

    let mut clauses = 0;
    if let Some(pitch) = slot("pitch") {
        text.push_str(&format!(", {pitch}-pitched"));
        clauses += 1;
    }
    let speed = slot("speed");
    if let Some(speed) = &speed {
        text.push_str(&format!(", speaking at a {} pace", speed_adverb(speed)));
        clauses += 1;
    }
    if let Some(tone) = slot("tone") {
        let joiner = if speed.is_some() { " with" } else { ", with" };
        text.push_str(&format!("{joiner} {} {tone} tone", article(&tone)));
        clauses += 1;
    }
    if let Some(prosody) = slot("prosody") {
        text.push_str(&format!(", {prosody} delivery"));
        clauses += 1;
    }
    if let Some(timbre) = slot("timbre") {
        let joiner = if clauses > 0 { ", and" } else { ", with" };
        text.push_str(&format!("{joiner} {} {timbre} timbre", article(&timbre)));
    }
    text.push('.');

    Ok(StyleDescription::new(text, DescriptionOrigin::Template).expect("template output is bounded and single-line"))
}

/// Whether `text` names `label` (or one of its surface forms) as a whole word,
/// ignoring case.
pub fn mentions_label(text: &str, dimension: &AttributeDimension, label: &str) -> bool {
    static WORD: OnceLock<Regex> = OnceLock::new();
    let word = WORD.get_or_init(|| Regex::new(r"[\p{L}\p{N}]+(?:[-'][\p{L}\p{N}]+)*").unwrap());
    let lowered = text.to_lowercase();
    let words: Vec<&str> = word
        .find_iter(&lowered)
        .flat_map(|m| {
            // Hyphenated compounds count both as a whole and per part.
            std::iter::once(m.as_str()).chain(m.as_str().split('-'))
        })
        .collect();
    dimension.surface_forms(label).iter().any(|form| {
        let parts: Vec<&str> = form.split_whitespace().collect();
        if parts.len() == 1 {
            words.contains(&parts[0])
        } else {
            lowered.contains(form.as_str())
        }
    })
}

/// Closed slots a paraphrase has to mention: labels other than the
/// `Other`/`Unspecified` sentinels.
fn required_mentions<'a>(
    record: &'a VoiceAttributeRecord,
    schema: &'a StyleSchema,
) -> impl Iterator<Item = (&'a AttributeDimension, &'a str)> {
    schema.closed_dimensions().filter_map(move |d| {
        let label = record.canonical(&d.name);
        (label != UNSPECIFIED && label != OTHER).then_some((d, label))
    })
}

/// True when every substantive closed label of `record` is named in `text`.
pub fn covers_record(text: &str, record: &VoiceAttributeRecord, schema: &StyleSchema) -> bool {
    required_mentions(record, schema).all(|(d, label)| mentions_label(text, d, label))
}

/// Asks the model for fluent prose; falls back to [`render_template`] when
/// the answer drops a slot or cannot be cleaned into a description.
pub async fn render_paraphrase(
    record: &VoiceAttributeRecord,
    schema: &StyleSchema,
    templates: &PromptTemplates,
    settings: &ChatSettings,
    llm: &dyn ChatClient,
) -> Result<StyleDescription, RenderError> {
    let report = validate_record(record, schema);
    if !report.is_empty() {
        return Err(RenderError::InvalidRecord(report));
    }
    let slots: Vec<String> = schema
        .dimensions
        .iter()
        .filter_map(|d| slot_text(record, schema, &d.name).map(|v| format!("- {}: {v}", d.name)))
        .collect();
    if slots.is_empty() {
        return render_template(record, schema);
    }
    let user = templates.render("paraphrase_user", &[("slots", &slots.join("\n"))]);
    let request = settings.request(templates.get("paraphrase_system").trim(), &user);
    let answer = llm.complete(&request).await?;

    let paraphrase = clean_description(&answer)
        .ok()
        .filter(|text| covers_record(text, record, schema))
        .and_then(|text| StyleDescription::new(text, DescriptionOrigin::LlmParaphrase).ok());
    match paraphrase {
        Some(description) => Ok(description),
        None => {
            tracing::debug!(persona = %record.persona_id, "paraphrase rejected, using template");
            render_template(record, schema)
        }
    }
}
