//! Persona/transcript corpora, seeded pair sampling and run persistence.
//!
//! # Sampling
//!
//! Pairs are drawn without replacement from the cross product
//! `personas × transcripts`, flattened as `index = p * |transcripts| + t`.
//! The draw is a sparse Fisher–Yates shuffle over `0..total` driven by a
//! counter-based generator, so any implementation can reproduce it:
//!
//! * the generator is ChaCha20 (20 rounds, 64-bit block counter starting at
//!   0, zero nonce) keyed with the seed as 8 little-endian bytes followed by
//!   24 zero bytes; each `u64` is two consecutive little-endian keystream
//!   words, low word first;
//! * a value below `bound` is the first draw `x` with
//!   `x < bound * floor((2^64 - 1) / bound)`, reduced as `x % bound`;
//! * step `i` (for `i` in `0..n`) swaps position `i` with
//!   `i + below(total - i)` and emits the value now at position `i`.
//!
//! # Run directory layout
//!
//! `manifest.json`, `records.jsonl` (one [`RunRecord`] per line) and an
//! `audio/` subdirectory for synthesized clips.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clients::replay::canonical_json;
use crate::clients::{ChatSettings, ReplayMode};
use crate::convert::{ConversionResult, PersonaDescription, Strategy};
use crate::eval::EvalResult;
use crate::render::DescriptionOrigin;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const AUDIO_DIR: &str = "audio";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    FileUnreadable { path: PathBuf, source: std::io::Error },
    #[error("{path} has no usable rows ({skipped} skipped)")]
    EmptyCorpus { path: PathBuf, skipped: usize },
    #[error("requested {requested} pairs but only {available} exist")]
    InsufficientCorpus { requested: u64, available: u64 },
    #[error("run directory: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed run file {path} line {line}: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub text: String,
}

/// Rows that loaded, plus how many were skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub skipped: usize,
}

#[derive(Deserialize)]
struct Row {
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(default)]
    persona: Option<String>,
    #[serde(default)]
    text: Option<String>,
}

fn row_id(id: Option<serde_json::Value>, line_no: usize) -> String {
    match id {
        Some(serde_json::Value::String(s)) if !s.trim().is_empty() => s,
        Some(serde_json::Value::Number(n)) => n.to_string(),
        _ => line_no.to_string(),
    }
}

fn load_rows<T>(path: &Path, mut make: impl FnMut(Row, usize) -> Option<T>) -> Result<Loaded<T>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let mut items = Vec::new();
    let mut skipped = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::FileUnreadable {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Row>(&line).ok().and_then(|row| make(row, i + 1)) {
            Some(item) => items.push(item),
            None => skipped += 1,
        }
    }
    if items.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            path: path.to_path_buf(),
            skipped,
        });
    }
    if skipped > 0 {
        tracing::warn!(path = %path.display(), skipped, "skipped unusable corpus rows");
    }
    Ok(Loaded { items, skipped })
}

/// JSONL rows `{id?, persona}`; ids default to the 1-based line number.
pub fn load_personas(path: &Path) -> Result<Loaded<PersonaDescription>, CorpusError> {
    let source = path.file_name().map(|n| n.to_string_lossy().into_owned());
    load_rows(path, |row, line_no| {
        let persona = PersonaDescription::new(row_id(row.id, line_no), row.persona?).ok()?;
        Some(match &source {
            Some(s) => persona.with_source(s.clone()),
            None => persona,
        })
    })
}

/// JSONL rows `{id?, text}`.
pub fn load_transcripts(path: &Path) -> Result<Loaded<Transcript>, CorpusError> {
    load_rows(path, |row, line_no| {
        let text = row.text.filter(|t| !t.trim().is_empty())?;
        Some(Transcript {
            id: row_id(row.id, line_no),
            text,
        })
    })
}

struct PairRng(ChaCha20Rng);

impl PairRng {
    fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self(ChaCha20Rng::from_seed(key))
    }

    fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let zone = bound * (u64::MAX / bound);
        loop {
            let x = self.0.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }
}

/// `n` distinct indices from `0..total` in seeded random order.
pub fn sample_indices(total: u64, n: u64, seed: u64) -> Result<Vec<u64>, CorpusError> {
    if n > total {
        return Err(CorpusError::InsufficientCorpus {
            requested: n,
            available: total,
        });
    }
    let mut rng = PairRng::new(seed);
    let mut swapped: HashMap<u64, u64> = HashMap::new();
    let mut out = Vec::with_capacity(n as usize);
    for i in 0..n {
        let j = i + rng.below(total - i);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        swapped.insert(j, at_i);
        swapped.insert(i, at_j);
        out.push(at_j);
    }
    Ok(out)
}

/// Seeded sample of `n` persona–transcript pairs without replacement.
pub fn sample_pairs(
    personas: &[PersonaDescription],
    transcripts: &[Transcript],
    n: usize,
    seed: u64,
) -> Result<Vec<(PersonaDescription, Transcript)>, CorpusError> {
    let width = transcripts.len() as u64;
    let total = personas.len() as u64 * width;
    Ok(sample_indices(total, n as u64, seed)?
        .into_iter()
        .map(|k| {
            (
                personas[(k / width) as usize].clone(),
                transcripts[(k % width) as usize].clone(),
            )
        })
        .collect())
}

/// How a run turns personas into TTS descriptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Raw persona text is the description.
    Baseline,
    Closed,
    Open,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::Closed, Method::Open];

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            Method::Baseline => None,
            Method::Closed => Some(Strategy::Closed),
            Method::Open => Some(Strategy::Open),
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::Baseline => "Baseline",
            Method::Closed => "P2VA-C",
            Method::Open => "P2VA-O",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::Closed => "closed",
            Method::Open => "open",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Method::Baseline),
            "closed" | "p2va-c" => Ok(Method::Closed),
            "open" | "p2va-o" => Ok(Method::Open),
            other => Err(format!("unknown strategy `{other}` (expected closed|open|baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub pair_id: String,
    pub persona_id: String,
    pub transcript_id: String,
    pub method: Method,
    pub persona_text: String,
    pub transcript_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversion: Option<ConversionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_origin: Option<DescriptionOrigin>,
    /// Clip path relative to the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<EvalResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub created_at: String,
}

/// Where run timestamps come from; `Fixed` makes runs byte-reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn now(&self) -> String {
        let t = match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
        };
        t.to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tts: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asr: Option<String>,
}

/// Drops credentials, query and fragment from an endpoint URL.
pub fn redact_endpoint(endpoint: &str) -> String {
    match url::Url::parse(endpoint) {
        Ok(mut u) if u.has_host() => {
            let _ = u.set_username("");
            let _ = u.set_password(None);
            u.set_query(None);
            u.set_fragment(None);
            u.to_string()
        }
        _ => endpoint.to_string(),
    }
}

impl Endpoints {
    pub fn redacted(&self) -> Self {
        let r = |e: &Option<String>| e.as_deref().map(redact_endpoint);
        Self {
            llm: r(&self.llm),
            tts: r(&self.tts),
            asr: r(&self.asr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub method: Method,
    pub seed: u64,
    pub sample_size: usize,
    pub schema_version: String,
    pub schema_hash: String,
    pub prompt_hashes: BTreeMap<String, String>,
    pub render_mode: String,
    pub chat: ChatSettings,
    pub endpoints: Endpoints,
    pub replay: ReplayMode,
    pub config_hash: String,
}

impl RunManifest {
    /// Fills `config_hash` (over every other field) and derives `run_id` from it.
    pub fn seal(mut self) -> Self {
        self.endpoints = self.endpoints.redacted();
        self.run_id.clear();
        self.config_hash.clear();
        let value = serde_json::to_value(&self).expect("manifest serializes");
        self.config_hash = hex::encode(Sha256::digest(canonical_json(&value).as_bytes()));
        self.run_id = format!("{}-{}", self.method, &self.config_hash[..12]);
        self
    }
}

/// Writes `manifest.json` and `records.jsonl` into `dir` (created if needed).
pub fn persist_run(records: &[RunRecord], manifest: &RunManifest, dir: &Path) -> Result<String, CorpusError> {
    std::fs::create_dir_all(dir.join(AUDIO_DIR))?;
    let mut manifest_json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    manifest_json.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), manifest_json)?;
    write_records(records, dir)?;
    Ok(manifest.run_id.clone())
}

pub fn write_records(records: &[RunRecord], dir: &Path) -> Result<(), CorpusError> {
    let tmp = dir.join(format!("{RECORDS_FILE}.tmp"));
    {
        let mut out = BufWriter::new(std::fs::File::create(&tmp)?);
        for record in records {
            serde_json::to_writer(&mut out, record).expect("record serializes");
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    std::fs::rename(tmp, dir.join(RECORDS_FILE))?;
    Ok(())
}

pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>, CorpusError> {
    let path = dir.join(RECORDS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| CorpusError::FileUnreadable {
        path: path.clone(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| CorpusError::Malformed {
                path: path.clone(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

pub fn read_run(dir: &Path) -> Result<(RunManifest, Vec<RunRecord>), CorpusError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| CorpusError::FileUnreadable {
        path: path.clone(),
        source,
    })?;
    let manifest = serde_json::from_str(&text).map_err(|source| CorpusError::Malformed { path, line: 1, source })?;
    Ok((manifest, read_records(dir)?))
}
