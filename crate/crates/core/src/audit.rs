//! Gender-cue detection, attribute distributions and gender-conditioned
//! profiles over conversion outputs, with Markdown/CSV/JSON emitters.
//!
//! Percentages are rounded half-up to one decimal and stored as integer
//! tenths, so report values never depend on float formatting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::schema::{is_sentinel, StyleSchema, VoiceAttributeRecord};

pub const MALE: &str = "Male";
pub const FEMALE: &str = "Female";
/// Bucket for Unspecified, Other and anything outside a table's columns.
pub const OTHERS: &str = "Others";

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("tone grouping: {0}")]
    Grouping(String),
    #[error("unknown format `{0}` (expected markdown|csv|json)")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderCue {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
}

fn cue_rules() -> &'static [(Regex, &'static str)] {
    static RULES: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    RULES.get_or_init(|| {
        let r = |p: &str| Regex::new(p).expect("valid regex");
        vec![
            (r(r"\bMr\b\.?"), MALE),
            (r(r"\b(?:Mrs|Ms)\b\.?|\bMiss\b"), FEMALE),
            (r(r"(?i)\b(?:he|him|his|himself)\b"), MALE),
            (r(r"(?i)\b(?:she|her|hers|herself)\b"), FEMALE),
            (r(r"(?i)\b(?:male|man)\b"), MALE),
            (r(r"(?i)\b(?:female|woman)\b"), FEMALE),
        ]
    })
}

/// Honorifics (case-sensitive), pronouns and explicit terms. Cues for both
/// genders, or none, give `Others`; evidence is the earliest match.
pub fn detect_gender_cue(persona_text: &str) -> GenderCue {
    let mut first: Option<(usize, &str, &str)> = None;
    let mut seen_male = false;
    let mut seen_female = false;
    for (re, label) in cue_rules() {
        if let Some(m) = re.find(persona_text) {
            if *label == MALE {
                seen_male = true;
            } else {
                seen_female = true;
            }
            if first.is_none_or(|(pos, _, _)| m.start() < pos) {
                first = Some((m.start(), label, m.as_str()));
            }
        }
    }
    match first {
        Some((_, label, span)) if seen_male != seen_female => GenderCue {
            label: label.to_string(),
            evidence: Some(span.to_string()),
        },
        _ => GenderCue {
            label: OTHERS.to_string(),
            evidence: None,
        },
    }
}

/// `count / total` as half-up tenths of a percent.
pub fn percent_tenths(count: usize, total: usize) -> u64 {
    assert!(total > 0, "percentage over an empty denominator");
    ((count as u64) * 2000 + total as u64) / (2 * total as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub count: usize,
    pub tenths: u64,
}

impl Cell {
    pub fn percent(&self) -> f64 {
        self.tenths as f64 / 10.0
    }
}

/// Label shares over a denominator; only labels that occur are listed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distribution {
    pub total: usize,
    pub cells: Vec<Cell>,
}

impl Distribution {
    /// `order` fixes the listing order; unlisted labels follow alphabetically, then Others.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>, order: &[&str]) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut total = 0;
        for label in labels {
            *counts.entry(label).or_default() += 1;
            total += 1;
        }
        let rank = |l: &str| {
            order
                .iter()
                .position(|o| *o == l)
                .unwrap_or(if l == OTHERS { usize::MAX } else { order.len() })
        };
        let mut labels: Vec<(&str, usize)> = counts.into_iter().collect();
        labels.sort_by_key(|(l, _)| (rank(l), *l));
        Self {
            total,
            cells: labels
                .into_iter()
                .map(|(label, count)| Cell {
                    label: label.to_string(),
                    count,
                    tenths: percent_tenths(count, total),
                })
                .collect(),
        }
    }

    pub fn cell(&self, label: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.label == label)
    }

    /// 0.0 for labels that never occur.
    pub fn percent(&self, label: &str) -> f64 {
        self.cell(label).map_or(0.0, Cell::percent)
    }

    pub fn tenths(&self, label: &str) -> u64 {
        self.cell(label).map_or(0, |c| c.tenths)
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Sum of the rounded cells, in tenths.
    pub fn sum_tenths(&self) -> u64 {
        self.cells.iter().map(|c| c.tenths).sum()
    }
}

fn bucket(label: &str) -> &str {
    if is_sentinel(label) {
        OTHERS
    } else {
        label
    }
}

fn label_order(schema: &StyleSchema, dimension: &str) -> Vec<String> {
    schema
        .dimension(dimension)
        .map(|d| d.substantive_labels().map(str::to_string).collect())
        .unwrap_or_default()
}

/// Share of each canonical label over all records; Unspecified and Other count as `Others`.
pub fn dimension_distribution(records: &[VoiceAttributeRecord], dimension: &str, schema: &StyleSchema) -> Distribution {
    let order = label_order(schema, dimension);
    let order: Vec<&str> = order.iter().map(String::as_str).collect();
    Distribution::from_labels(records.iter().map(|r| bucket(r.canonical(dimension))), &order)
}

/// Tone distribution over `groups`; raw tone labels are too many to keep row sums within rounding bounds.
pub fn tone_group_distribution(records: &[VoiceAttributeRecord], groups: &ToneGroups) -> Distribution {
    let columns = groups.columns();
    let order: Vec<&str> = columns.iter().map(String::as_str).collect();
    Distribution::from_labels(records.iter().map(|r| groups.group_of(r.canonical("tone"))), &order)
}

pub const GENDER_COLUMNS: [&str; 3] = [MALE, FEMALE, OTHERS];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderShift {
    /// Cue distribution over the persona texts.
    pub original: Distribution,
    /// Gender distribution over the conversion records.
    pub converted: Distribution,
}

/// Both rows of the before/after gender table. Callers pass the personas
/// that produced `records`.
pub fn gender_shift<'a>(
    persona_texts: impl IntoIterator<Item = &'a str>,
    records: &[VoiceAttributeRecord],
    schema: &StyleSchema,
) -> GenderShift {
    let cues: Vec<GenderCue> = persona_texts.into_iter().map(detect_gender_cue).collect();
    GenderShift {
        original: Distribution::from_labels(cues.iter().map(|c| c.label.as_str()), &GENDER_COLUMNS),
        converted: dimension_distribution(records, "gender", schema),
    }
}

/// Ordered tone groups; labels outside every group fall into `Others`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToneGroups {
    groups: Vec<(String, Vec<String>)>,
}

impl Default for ToneGroups {
    fn default() -> Self {
        let g = |name: &str, labels: &[&str]| (name.to_string(), labels.iter().map(|s| s.to_string()).collect());
        Self {
            groups: vec![
                g("C&A", &["Analytical", "Authoritative", "Intellectual", "Precise"]),
                g("W&S", &["Warm", "Supportive", "Gentle", "Calm"]),
                g("E&E", &["Engaging", "Energetic", "Animated", "Enthusiastic"]),
            ],
        }
    }
}

impl<'de> Deserialize<'de> for ToneGroups {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct GroupsVisitor;
        impl<'de> Visitor<'de> for GroupsVisitor {
            type Value = ToneGroups;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping group names to label lists")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<ToneGroups, A::Error> {
                let mut groups = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Vec<String>>()? {
                    groups.push((k, v));
                }
                Ok(ToneGroups { groups })
            }
        }
        d.deserialize_map(GroupsVisitor)
    }
}

impl ToneGroups {
    /// Parses `{group: [labels]}`, keeping the file's group order.
    pub fn from_json(text: &str) -> Result<Self, AuditError> {
        let groups: Self = serde_json::from_str(text).map_err(|e| AuditError::Grouping(e.to_string()))?;
        if groups.groups.is_empty() {
            return Err(AuditError::Grouping("no groups defined".into()));
        }
        let mut seen = BTreeMap::new();
        for (name, labels) in &groups.groups {
            if name == OTHERS {
                return Err(AuditError::Grouping("`Others` is implicit".into()));
            }
            for l in labels {
                if let Some(prev) = seen.insert(l.to_lowercase(), name) {
                    return Err(AuditError::Grouping(format!("`{l}` is in both {prev} and {name}")));
                }
            }
        }
        Ok(groups)
    }

    pub fn group_of(&self, tone_label: &str) -> &str {
        self.groups
            .iter()
            .find(|(_, labels)| labels.iter().any(|l| l.eq_ignore_ascii_case(tone_label)))
            .map_or(OTHERS, |(name, _)| name.as_str())
    }

    pub fn columns(&self) -> Vec<String> {
        self.groups
            .iter()
            .map(|(n, _)| n.clone())
            .chain([OTHERS.to_string()])
            .collect()
    }
}

/// Default grouping of a canonical tone label.
pub fn tone_group(tone_label: &str) -> String {
    ToneGroups::default().group_of(tone_label).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileTarget {
    Tone,
    Speed,
    Pitch,
}

impl ProfileTarget {
    pub const ALL: [ProfileTarget; 3] = [ProfileTarget::Tone, ProfileTarget::Speed, ProfileTarget::Pitch];

    pub fn dimension(self) -> &'static str {
        match self {
            ProfileTarget::Tone => "tone",
            ProfileTarget::Speed => "speed",
            ProfileTarget::Pitch => "pitch",
        }
    }

    fn title(self) -> &'static str {
        match self {
            ProfileTarget::Tone => "Tone profile by gender",
            ProfileTarget::Speed => "Speed profile by gender",
            ProfileTarget::Pitch => "Pitch profile by gender",
        }
    }
}

impl FromStr for ProfileTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tone" => Ok(Self::Tone),
            "speed" => Ok(Self::Speed),
            "pitch" => Ok(Self::Pitch),
            _ => Err(format!("unknown profile target `{s}`")),
        }
    }
}

/// Report column order for speed and pitch, then any other schema labels.
fn table_columns(schema: &StyleSchema, target: ProfileTarget) -> Vec<String> {
    let preferred: &[&str] = match target {
        ProfileTarget::Speed => &["Fast", "Normal", "Slow"],
        ProfileTarget::Pitch => &["High", "Medium", "Low"],
        ProfileTarget::Tone => &[],
    };
    let labels = label_order(schema, target.dimension());
    let mut cols: Vec<String> = preferred
        .iter()
        .filter(|p| labels.iter().any(|l| l == *p))
        .map(|p| p.to_string())
        .collect();
    cols.extend(labels.into_iter().filter(|l| !preferred.contains(&l.as_str())));
    cols
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub gender: String,
    pub distribution: Distribution,
}

/// Target-label shares within each gender.
///
/// `rows` follow the report table shapes: Male and Female only; the tone
/// table has an Others column, the speed and pitch tables do not, so their
/// denominators exclude records whose target is Unspecified. `extended`
/// keeps every bucket, including the Others gender row, over all records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalProfile {
    pub target: ProfileTarget,
    pub columns: Vec<String>,
    pub rows: Vec<ProfileRow>,
    pub extended: Vec<ProfileRow>,
}

pub fn conditional_profile(
    records: &[VoiceAttributeRecord],
    target: ProfileTarget,
    schema: &StyleSchema,
    groups: &ToneGroups,
) -> ConditionalProfile {
    let dim = target.dimension();
    let target_label = |r: &VoiceAttributeRecord| -> String {
        let label = r.canonical(dim);
        match target {
            ProfileTarget::Tone => groups.group_of(label).to_string(),
            _ => bucket(label).to_string(),
        }
    };
    let columns: Vec<String> = match target {
        ProfileTarget::Tone => groups.columns(),
        _ => table_columns(schema, target),
    };
    let col_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let row_for = |gender: &str, table_shape: bool| {
        let labels: Vec<String> = records
            .iter()
            .filter(|r| bucket(r.canonical("gender")) == gender)
            .map(target_label)
            .filter(|l| !table_shape || col_refs.contains(&l.as_str()))
            .collect();
        ProfileRow {
            gender: gender.to_string(),
            distribution: Distribution::from_labels(labels.iter().map(String::as_str), &col_refs),
        }
    };
    ConditionalProfile {
        target,
        rows: [MALE, FEMALE].iter().map(|g| row_for(g, true)).collect(),
        extended: GENDER_COLUMNS.iter().map(|g| row_for(g, false)).collect(),
        columns,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionDistribution {
    pub dimension: String,
    pub distribution: Distribution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub sample_size: usize,
    pub distributions: Vec<DimensionDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender_shift: Option<GenderShift>,
    pub profiles: Vec<ConditionalProfile>,
}

/// Full audit over closed-strategy records. `persona_texts`, when given,
/// adds the before/after gender table.
pub fn build_audit(
    records: &[VoiceAttributeRecord],
    persona_texts: Option<&[String]>,
    schema: &StyleSchema,
    groups: &ToneGroups,
) -> AuditReport {
    AuditReport {
        sample_size: records.len(),
        distributions: schema
            .closed_dimensions()
            .map(|d| DimensionDistribution {
                dimension: d.name.clone(),
                distribution: match d.name.as_str() {
                    "tone" => tone_group_distribution(records, groups),
                    _ => dimension_distribution(records, &d.name, schema),
                },
            })
            .collect(),
        gender_shift: persona_texts.map(|texts| gender_shift(texts.iter().map(String::as_str), records, schema)),
        profiles: ProfileTarget::ALL
            .iter()
            .filter(|t| schema.dimension(t.dimension()).is_some())
            .map(|&t| conditional_profile(records, t, schema, groups))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for AuditFormat {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(AuditError::Format(other.to_string())),
        }
    }
}

fn fmt_tenths(t: u64) -> String {
    format!("{}.{}", t / 10, t % 10)
}

/// One table: title, column labels, and (row name, distribution) rows.
struct Table<'a> {
    id: String,
    title: String,
    columns: Vec<String>,
    rows: Vec<(String, &'a Distribution)>,
}

fn tables(report: &AuditReport) -> Vec<Table<'_>> {
    let mut out = Vec::new();
    for d in &report.distributions {
        if d.distribution.is_empty() {
            continue;
        }
        out.push(Table {
            id: format!("distribution:{}", d.dimension),
            title: format!("Distribution: {}", d.dimension),
            columns: d.distribution.cells.iter().map(|c| c.label.clone()).collect(),
            rows: vec![(d.dimension.clone(), &d.distribution)],
        });
    }
    if let Some(shift) = &report.gender_shift {
        let rows: Vec<_> = [
            ("Original Description", &shift.original),
            ("After Applying P2VA", &shift.converted),
        ]
        .into_iter()
        .filter(|(_, d)| !d.is_empty())
        .map(|(n, d)| (n.to_string(), d))
        .collect();
        if !rows.is_empty() {
            out.push(Table {
                id: "gender_shift".into(),
                title: "Gender distribution change".into(),
                columns: GENDER_COLUMNS.iter().map(|s| s.to_string()).collect(),
                rows,
            });
        }
    }
    for p in &report.profiles {
        let rows: Vec<_> = p
            .rows
            .iter()
            .filter(|r| !r.distribution.is_empty())
            .map(|r| (r.gender.clone(), &r.distribution))
            .collect();
        if rows.is_empty() {
            continue;
        }
        out.push(Table {
            id: format!("profile:{}", p.target.dimension()),
            title: p.target.title().into(),
            columns: p.columns.clone(),
            rows,
        });
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Deterministic serialization. CSV has one line per table row:
/// `table,row,n,label=percent,...`.
pub fn render_audit(report: &AuditReport, format: AuditFormat) -> String {
    match format {
        AuditFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        AuditFormat::Markdown => {
            let mut out = format!("# Voice attribute audit\n\nRecords: {}\n", report.sample_size);
            for t in tables(report) {
                out.push_str(&format!("\n## {}\n\n", t.title));
                out.push_str(&format!("| | n | {} |\n", t.columns.join(" | ")));
                out.push_str(&format!("|---|---:|{}\n", "---:|".repeat(t.columns.len())));
                for (name, d) in &t.rows {
                    let cells: Vec<String> = t
                        .columns
                        .iter()
                        .map(|c| format!("{}%", fmt_tenths(d.tenths(c))))
                        .collect();
                    out.push_str(&format!("| {} | {} | {} |\n", name, d.total, cells.join(" | ")));
                }
            }
            out
        }
        AuditFormat::Csv => {
            let mut out = String::new();
            for t in tables(report) {
                for (name, d) in &t.rows {
                    let mut fields = vec![csv_field(&t.id), csv_field(name), d.total.to_string()];
                    fields.extend(
                        t.columns
                            .iter()
                            .map(|c| csv_field(&format!("{c}={}", fmt_tenths(d.tenths(c))))),
                    );
                    out.push_str(&fields.join(","));
                    out.push('\n');
                }
            }
            out
        }
    }
}
