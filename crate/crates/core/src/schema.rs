//! Voice-attribute taxonomy.
//!
//! A [`StyleSchema`] is an ordered list of [`AttributeDimension`]s. Closed
//! dimensions carry a fixed label inventory plus a synonym table used to
//! canonicalize whatever surface form a language model produces; open
//! dimensions (prosody, timbre) accept free text.
//!
//! Raw slot values follow the `Label (evidence)` convention: the first
//! parenthesized span is kept as evidence, the remaining head is mapped to a
//! canonical label.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::Digest;
use thiserror::Error;

/// Sentinel for a slot the model left empty or could not decide.
pub const UNSPECIFIED: &str = "Unspecified";
/// Sentinel for a closed-class value outside the inventory.
pub const OTHER: &str = "Other";

/// Surface forms that always mean "no value" regardless of dimension.
const UNSPECIFIED_FORMS: &[&str] = &[
    "unspecified",
    "not specified",
    "unknown",
    "none",
    "n/a",
    "na",
    "null",
    "-",
];

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("attribute value is empty")]
    EmptyInput,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("schema file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeClass {
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDimension {
    pub name: String,
    pub class: AttributeClass,
    #[serde(rename = "labels", default)]
    pub canonical_labels: Vec<String>,
    /// Lowercase surface form -> canonical label.
    #[serde(default)]
    pub synonyms: BTreeMap<String, String>,
}

impl AttributeDimension {
    pub fn closed(name: &str, labels: &[&str], synonyms: &[(&str, &str)]) -> Self {
        Self {
            name: name.to_string(),
            class: AttributeClass::Closed,
            canonical_labels: labels.iter().map(|l| l.to_string()).collect(),
            synonyms: synonyms.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn open(name: &str) -> Self {
        Self {
            name: name.to_string(),
            class: AttributeClass::Open,
            canonical_labels: Vec::new(),
            synonyms: BTreeMap::new(),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.class == AttributeClass::Closed
    }

    /// Whether `label` is acceptable as a canonical value for this dimension.
    pub fn accepts(&self, label: &str) -> bool {
        match self.class {
            AttributeClass::Open => true,
            AttributeClass::Closed => label == UNSPECIFIED || self.canonical_labels.iter().any(|l| l == label),
        }
    }

    /// Labels other than the `Other`/`Unspecified` sentinels, in inventory order.
    pub fn substantive_labels(&self) -> impl Iterator<Item = &str> {
        self.canonical_labels
            .iter()
            .map(String::as_str)
            .filter(|l| !is_sentinel(l))
    }

    /// Lowercase surface forms (label itself plus synonyms) that denote `label`.
    pub fn surface_forms(&self, label: &str) -> Vec<String> {
        let mut forms = vec![label.to_lowercase()];
        forms.extend(
            self.synonyms
                .iter()
                .filter(|(_, v)| v.as_str() == label)
                .map(|(k, _)| k.clone()),
        );
        forms
    }

    fn lookup(&self, key: &str) -> Option<&str> {
        if let Some(label) = self.canonical_labels.iter().find(|l| l.eq_ignore_ascii_case(key)) {
            return Some(label);
        }
        if let Some(label) = self.synonyms.get(key) {
            return Some(label);
        }
        if UNSPECIFIED_FORMS.contains(&key) {
            return Some(UNSPECIFIED);
        }
        None
    }

    fn validate(&self) -> Result<(), SchemaError> {
        let invalid = |msg: String| Err(SchemaError::InvalidSchema(msg));
        if self.name.trim().is_empty() {
            return invalid("dimension with empty name".into());
        }
        match self.class {
            AttributeClass::Closed if self.canonical_labels.len() < 2 => {
                return invalid(format!("closed dimension `{}` needs at least 2 labels", self.name));
            }
            AttributeClass::Open if !self.canonical_labels.is_empty() => {
                return invalid(format!("open dimension `{}` cannot list labels", self.name));
            }
            _ => {}
        }
        let mut seen = HashSet::new();
        for label in &self.canonical_labels {
            if !seen.insert(label.to_lowercase()) {
                return invalid(format!("duplicate label `{label}` in `{}`", self.name));
            }
        }
        for (form, target) in &self.synonyms {
            if form != &form.to_lowercase() {
                return invalid(format!("synonym `{form}` in `{}` is not lowercase", self.name));
            }
            if !self.canonical_labels.contains(target) {
                return invalid(format!(
                    "synonym `{form}` in `{}` maps to unknown label `{target}`",
                    self.name
                ));
            }
        }
        Ok(())
    }
}

pub fn is_sentinel(label: &str) -> bool {
    label == UNSPECIFIED || label == OTHER
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleSchema {
    pub version: String,
    pub dimensions: Vec<AttributeDimension>,
}

impl StyleSchema {
    pub fn new(version: impl Into<String>, dimensions: Vec<AttributeDimension>) -> Result<Self, SchemaError> {
        let schema = Self {
            version: version.into(),
            dimensions,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn dimension(&self, name: &str) -> Option<&AttributeDimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn closed_dimensions(&self) -> impl Iterator<Item = &AttributeDimension> {
        self.dimensions.iter().filter(|d| d.is_closed())
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut names = HashSet::new();
        for dim in &self.dimensions {
            dim.validate()?;
            if !names.insert(dim.name.as_str()) {
                return Err(SchemaError::InvalidSchema(format!(
                    "duplicate dimension `{}`",
                    dim.name
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let schema: StyleSchema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Pretty JSON with a trailing newline; stable across runs.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("schema serializes");
        out.push('\n');
        out
    }

    /// SHA-256 hex of [`Self::to_json`].
    pub fn content_hash(&self) -> String {
        hex::encode(sha2::Sha256::digest(self.to_json().as_bytes()))
    }
}

/// The built-in preset: five closed dimensions and two open ones.
pub fn default_schema() -> StyleSchema {
    let dimensions = vec![
        AttributeDimension::closed(
            "gender",
            &["Male", "Female", UNSPECIFIED],
            &[
                ("man", "Male"),
                ("masculine", "Male"),
                ("woman", "Female"),
                ("feminine", "Female"),
            ],
        ),
        AttributeDimension::closed(
            "accent",
            &["American", "British", "Asian", "Indian", OTHER, UNSPECIFIED],
            &[
                ("north american", "American"),
                ("us", "American"),
                ("usa", "American"),
                ("uk", "British"),
                ("english", "British"),
            ],
        ),
        AttributeDimension::closed(
            "tone",
            &[
                "Analytical",
                "Authoritative",
                "Calm",
                "Warm",
                "Supportive",
                "Gentle",
                "Engaging",
                "Energetic",
                "Animated",
                OTHER,
                UNSPECIFIED,
            ],
            &[
                ("intellectual", "Analytical"),
                ("precise", "Analytical"),
                ("enthusiastic", "Energetic"),
            ],
        ),
        AttributeDimension::closed(
            "speed",
            &["Slow", "Normal", "Fast"],
            &[
                ("measured", "Normal"),
                ("moderate", "Normal"),
                ("quick", "Fast"),
                ("rapid", "Fast"),
                ("brisk", "Fast"),
                ("deliberate", "Slow"),
            ],
        ),
        AttributeDimension::closed(
            "pitch",
            &["Low", "Medium", "High"],
            &[("moderate", "Medium"), ("deep", "Low"), ("high-pitched", "High")],
        ),
        AttributeDimension::open("prosody"),
        AttributeDimension::open("timbre"),
    ];
    StyleSchema {
        version: "1.0".to_string(),
        dimensions,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeValue {
    pub dimension: String,
    pub canonical: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
    pub raw: String,
}

impl AttributeValue {
    pub fn unspecified(dimension: &str) -> Self {
        Self {
            dimension: dimension.to_string(),
            canonical: UNSPECIFIED.to_string(),
            evidence: None,
            raw: String::new(),
        }
    }

    pub fn is_unspecified(&self) -> bool {
        self.canonical == UNSPECIFIED
    }

    /// Head text of the raw value with the evidence span removed.
    pub fn surface(&self) -> String {
        split_evidence(self.raw.trim()).0
    }

    /// `Label (evidence)` form, as requested from the model.
    pub fn to_slot_string(&self) -> String {
        match &self.evidence {
            Some(ev) => format!("{} ({ev})", self.canonical),
            None => self.canonical.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoiceAttributeRecord {
    pub persona_id: String,
    pub values: BTreeMap<String, AttributeValue>,
    pub schema_version: String,
}

impl VoiceAttributeRecord {
    pub fn new(persona_id: impl Into<String>, schema: &StyleSchema) -> Self {
        Self {
            persona_id: persona_id.into(),
            values: BTreeMap::new(),
            schema_version: schema.version.clone(),
        }
    }

    pub fn insert(&mut self, value: AttributeValue) {
        self.values.insert(value.dimension.clone(), value);
    }

    pub fn get(&self, dimension: &str) -> Option<&AttributeValue> {
        self.values.get(dimension)
    }

    /// Canonical label of `dimension`, `Unspecified` when the slot is absent.
    pub fn canonical(&self, dimension: &str) -> &str {
        self.values
            .get(dimension)
            .map(|v| v.canonical.as_str())
            .unwrap_or(UNSPECIFIED)
    }

    /// Flat JSON object in schema order: `{"gender": "Female (Mrs. Simone)", ...}`.
    ///
    /// Slots that were never filled are left out. A slot's raw text is kept
    /// when it still normalizes to the stored value, so parsing the output
    /// reproduces the record exactly.
    pub fn to_flat_json(&self, schema: &StyleSchema) -> String {
        let mut map = serde_json::Map::new();
        for dim in &schema.dimensions {
            if let Some(v) = self.values.get(&dim.name) {
                if v.is_unspecified() && v.raw.is_empty() {
                    continue;
                }
                let raw_is_current = !v.raw.is_empty() && normalize_label(dim, &v.raw).is_ok_and(|n| n == *v);
                let text = if raw_is_current {
                    v.raw.clone()
                } else {
                    v.to_slot_string()
                };
                map.insert(dim.name.clone(), serde_json::Value::String(text));
            }
        }
        serde_json::Value::Object(map).to_string()
    }
}

/// Splits `raw` into the head and the first parenthesized span.
fn split_evidence(raw: &str) -> (String, Option<String>) {
    let Some(open) = raw.find('(') else {
        return (raw.to_string(), None);
    };
    let before = &raw[..open];
    let rest = &raw[open + 1..];
    let (inner, after) = match rest.find(')') {
        Some(close) => (&rest[..close], &rest[close + 1..]),
        None => (rest, ""),
    };
    let head = collapse_ws(&format!("{before} {after}"));
    let inner = collapse_ws(inner);
    (head, (!inner.is_empty()).then_some(inner))
}

pub(crate) fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn lookup_keys(head: &str) -> Vec<String> {
    let key = head
        .to_lowercase()
        .trim_matches(|c: char| c == '.' || c == '!' || c == '"' || c == '\'')
        .to_string();
    let mut keys = vec![key.clone()];
    let first_segment = key.split([',', ';', '/', '|']).next().unwrap_or("").trim().to_string();
    if first_segment != key {
        keys.push(first_segment.clone());
    }
    keys.extend(
        first_segment
            .split(|c: char| c.is_whitespace() || c == '-')
            .filter(|w| !w.is_empty())
            .map(str::to_string),
    );
    keys
}

/// Canonicalizes one raw slot value for `dimension`.
pub fn normalize_label(dimension: &AttributeDimension, raw: &str) -> Result<AttributeValue, SchemaError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(SchemaError::EmptyInput);
    }
    let (head, evidence) = split_evidence(trimmed);
    let canonical = match dimension.class {
        AttributeClass::Closed => {
            if head.is_empty() {
                UNSPECIFIED.to_string()
            } else {
                lookup_keys(&head)
                    .iter()
                    .find_map(|k| dimension.lookup(k))
                    .map(str::to_string)
                    .unwrap_or_else(|| {
                        if dimension.canonical_labels.iter().any(|l| l == OTHER) {
                            OTHER.to_string()
                        } else {
                            UNSPECIFIED.to_string()
                        }
                    })
            }
        }
        AttributeClass::Open => {
            if head.is_empty() || UNSPECIFIED_FORMS.contains(&head.to_lowercase().as_str()) {
                UNSPECIFIED.to_string()
            } else {
                head
            }
        }
    };
    Ok(AttributeValue {
        dimension: dimension.name.clone(),
        canonical,
        evidence,
        raw: trimmed.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    MissingDimension { dimension: String },
    UnknownDimension { dimension: String },
    NonCanonical { dimension: String, value: String },
    KeyMismatch { key: String, dimension: String },
    EmptyRaw { dimension: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_record(record: &VoiceAttributeRecord, schema: &StyleSchema) -> ValidationReport {
    let mut violations = Vec::new();
    for dim in schema.closed_dimensions() {
        if !record.values.contains_key(&dim.name) {
            violations.push(Violation::MissingDimension {
                dimension: dim.name.clone(),
            });
        }
    }
    for (key, value) in &record.values {
        let Some(dim) = schema.dimension(key) else {
            violations.push(Violation::UnknownDimension { dimension: key.clone() });
            continue;
        };
        if &value.dimension != key {
            violations.push(Violation::KeyMismatch {
                key: key.clone(),
                dimension: value.dimension.clone(),
            });
        }
        if !dim.accepts(&value.canonical) {
            violations.push(Violation::NonCanonical {
                dimension: key.clone(),
                value: value.canonical.clone(),
            });
        }
        if !value.is_unspecified() && value.raw.trim().is_empty() {
            violations.push(Violation::EmptyRaw { dimension: key.clone() });
        }
    }
    ValidationReport { violations }
}
