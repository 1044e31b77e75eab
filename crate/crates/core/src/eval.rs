//! WER, MOS ingestion/judging and per-method comparison tables.
//!
//! Transcript normalization before WER: lowercase, every character that is
//! not alphanumeric becomes a word break, except an apostrophe (`'` or `’`)
//! between two alphanumerics, which is kept as `'`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use futures::future::join_all;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{
    AudioClip, ChatClient, ChatSettings, ClientError, SpeechRecognizer, SpeechSynthesizer, SynthesisRequest,
};
use crate::corpus::{Method, RunRecord, AUDIO_DIR};
use crate::prompts::PromptTemplates;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference transcript is empty")]
    EmptyReference,
    #[error("judge reply has no score in [1, 5]: {reply:?}")]
    JudgeUnparsable { reply: String },
    #[error(transparent)]
    Transport(#[from] ClientError),
    #[error("{failed} of {total} records failed evaluation")]
    TooManyFailures { failed: usize, total: usize },
    #[error("scores file {path}: {message}")]
    Scores { path: PathBuf, message: String },
    #[error("audio: {0}")]
    Io(#[from] std::io::Error),
}

pub fn normalize_transcript(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut cleaned = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cleaned.extend(c.to_lowercase());
        } else if (c == '\'' || c == '’')
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            cleaned.push('\'');
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Unit-cost Levenshtein distance over tokens.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

pub fn wer_text(reference: &str, hypothesis: &str) -> Result<f64, EvalError> {
    wer(&normalize_transcript(reference), &normalize_transcript(hypothesis))
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid regex"))
}

/// First number in the reply that lies in `[1, 5]`.
pub fn parse_judge_score(reply: &str) -> Option<f64> {
    number_re()
        .find_iter(reply)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .find(|v| (1.0..=5.0).contains(v))
}

/// Asks the judge model for a 1–5 naturalness rating; one retry on an unparsable reply.
pub async fn mos_judge(
    description: &str,
    transcript: &str,
    llm: &dyn ChatClient,
    templates: &PromptTemplates,
    settings: &ChatSettings,
) -> Result<f64, EvalError> {
    let system = templates.render("judge_system", &[]);
    let user = templates.render(
        "judge_user",
        &[("description", description), ("transcript", transcript)],
    );
    let req = settings.request(&system, &user);
    let mut reply = String::new();
    for _ in 0..2 {
        reply = llm.complete(&req).await?;
        if let Some(score) = parse_judge_score(&reply) {
            return Ok(score);
        }
        tracing::debug!(reply = %reply, "unparsable judge reply");
    }
    Err(EvalError::JudgeUnparsable { reply })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub pair_id: String,
    pub method: Method,
    pub wer: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utmos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mos_llm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mos_human: Option<f64>,
}

/// One row of an external scores file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub pair_id: String,
    #[serde(default)]
    pub utmos: Option<f64>,
    #[serde(default)]
    pub mos_human: Option<f64>,
}

pub type Scores = BTreeMap<String, ScoreRow>;

/// Loads JSONL `{pair_id, utmos?, mos_human?}`; scores must lie in [1, 5].
pub fn load_scores(path: &Path) -> Result<Scores, EvalError> {
    let err = |message: String| EvalError::Scores {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut scores = Scores::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: ScoreRow = serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        for v in [row.utmos, row.mos_human].into_iter().flatten() {
            if !(1.0..=5.0).contains(&v) {
                return Err(err(format!("line {}: score {v} outside [1, 5]", i + 1)));
            }
        }
        scores.insert(row.pair_id.clone(), row);
    }
    Ok(scores)
}

pub struct EvalClients<'a> {
    /// Used only for records without a stored clip.
    pub tts: Option<&'a dyn SpeechSynthesizer>,
    pub asr: &'a dyn SpeechRecognizer,
    /// LLM judge; MOS(LLM) is left empty without one.
    pub judge: Option<&'a dyn ChatClient>,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Run directory holding `audio/`; new clips are saved there when set.
    pub run_dir: Option<PathBuf>,
    pub templates: PromptTemplates,
    pub judge_settings: ChatSettings,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub pair_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub table: EvalTable,
    pub results: Vec<EvalResult>,
    pub skipped: Vec<Skipped>,
}

fn clip_name(record: &RunRecord) -> String {
    let safe: String = record
        .pair_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{AUDIO_DIR}/{}-{safe}.wav", record.method)
}

struct Evaluated {
    result: EvalResult,
    saved_clip: Option<String>,
}

async fn evaluate_one(
    record: &RunRecord,
    clients: &EvalClients<'_>,
    scores: &Scores,
    opts: &EvalOptions,
) -> Result<Evaluated, String> {
    if let Some(e) = &record.error {
        return Err(format!("conversion failed: {e}"));
    }
    let description = record
        .description
        .as_deref()
        .ok_or_else(|| "record has no description".to_string())?;
    let stored = match (&record.audio, &opts.run_dir) {
        (Some(rel), Some(dir)) => {
            let bytes = std::fs::read(dir.join(rel)).map_err(|e| format!("reading {rel}: {e}"))?;
            Some(AudioClip::from_wav(bytes).map_err(|e| e.to_string())?)
        }
        _ => None,
    };
    let mut saved_clip = None;
    let clip = match stored {
        Some(clip) => clip,
        None => {
            let tts = clients.tts.ok_or_else(|| "no clip and no TTS backend".to_string())?;
            let clip = tts
                .synthesize(&SynthesisRequest::new(description, &record.transcript_text))
                .await
                .map_err(|e| e.to_string())?;
            if let Some(dir) = &opts.run_dir {
                let rel = clip_name(record);
                std::fs::create_dir_all(dir.join(AUDIO_DIR)).map_err(|e| e.to_string())?;
                std::fs::write(dir.join(&rel), &clip.bytes).map_err(|e| e.to_string())?;
                saved_clip = Some(rel);
            }
            clip
        }
    };
    let hypothesis = clients.asr.transcribe(&clip).await.map_err(|e| e.to_string())?;
    let wer = wer_text(&record.transcript_text, &hypothesis).map_err(|e| e.to_string())?;
    let mos_llm = match clients.judge {
        Some(judge) => Some(
            mos_judge(
                description,
                &record.transcript_text,
                judge,
                &opts.templates,
                &opts.judge_settings,
            )
            .await
            .map_err(|e| e.to_string())?,
        ),
        None => None,
    };
    let external = scores.get(&record.pair_id);
    Ok(Evaluated {
        result: EvalResult {
            pair_id: record.pair_id.clone(),
            method: record.method,
            wer,
            hypothesis: Some(hypothesis),
            utmos: external.and_then(|s| s.utmos),
            mos_llm,
            mos_human: external.and_then(|s| s.mos_human),
        },
        saved_clip,
    })
}

/// Synthesizes missing clips, transcribes, scores and aggregates.
///
/// Sets `metrics` (and `audio` for newly saved clips) on each evaluated
/// record. Failing records are skipped; the run fails only if more than
/// half of them fail.
pub async fn evaluate_run(
    records: &mut [RunRecord],
    clients: &EvalClients<'_>,
    scores: &Scores,
    opts: &EvalOptions,
) -> Result<EvalOutcome, EvalError> {
    let outcomes = join_all(records.iter().map(|r| evaluate_one(r, clients, scores, opts))).await;
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (record, outcome) in records.iter_mut().zip(outcomes) {
        match outcome {
            Ok(ev) => {
                if ev.saved_clip.is_some() {
                    record.audio = ev.saved_clip;
                }
                record.metrics = Some(ev.result.clone());
                results.push(ev.result);
            }
            Err(reason) => {
                tracing::warn!(pair_id = %record.pair_id, %reason, "skipping record");
                skipped.push(Skipped {
                    pair_id: record.pair_id.clone(),
                    reason,
                });
            }
        }
    }
    let total = records.len();
    if skipped.len() * 2 > total {
        return Err(EvalError::TooManyFailures {
            failed: skipped.len(),
            total,
        });
    }
    Ok(EvalOutcome {
        table: EvalTable::from_results(&results),
        results,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub count: usize,
}

impl Aggregate {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    /// WER as a ratio; shown as a percentage.
    pub wer: Option<Aggregate>,
    pub mos_llm: Option<Aggregate>,
    pub mos_human: Option<Aggregate>,
    pub utmos: Option<Aggregate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
}

pub const TABLE_COLUMNS: [&str; 5] = ["method", "WER(%)", "MOS(LLM)", "MOS(human)", "UTMOS"];

impl EvalTable {
    /// Rows in Baseline, P2VA-C, P2VA-O order; means reduced in pair-id order.
    pub fn from_results(results: &[EvalResult]) -> Self {
        let mut sorted: Vec<&EvalResult> = results.iter().collect();
        sorted.sort_by(|a, b| (a.method, &a.pair_id).cmp(&(b.method, &b.pair_id)));
        let rows = Method::ALL
            .iter()
            .filter_map(|&method| {
                let mine: Vec<&EvalResult> = sorted.iter().copied().filter(|r| r.method == method).collect();
                if mine.is_empty() {
                    return None;
                }
                let col = |f: fn(&EvalResult) -> Option<f64>| {
                    Aggregate::of(&mine.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
                };
                Some(EvalRow {
                    method,
                    wer: col(|r| Some(r.wer)),
                    mos_llm: col(|r| r.mos_llm),
                    mos_human: col(|r| r.mos_human),
                    utmos: col(|r| r.utmos),
                })
            })
            .collect();
        Self { rows }
    }

    fn cells(row: &EvalRow) -> [Option<String>; 4] {
        let mos = |a: &Option<Aggregate>| a.map(|a| format!("{:.2}", a.mean));
        [
            row.wer.map(|a| format!("{:.1}", a.mean * 100.0)),
            mos(&row.mos_llm),
            mos(&row.mos_human),
            mos(&row.utmos),
        ]
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} |\n|---|---:|---:|---:|---:|\n", TABLE_COLUMNS.join(" | "));
        for row in &self.rows {
            let cells: Vec<String> = Self::cells(row)
                .into_iter()
                .map(|c| c.unwrap_or_else(|| "-".into()))
                .collect();
            out.push_str(&format!("| {} | {} |\n", row.method.display_name(), cells.join(" | ")));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", TABLE_COLUMNS.join(","));
        for row in &self.rows {
            let cells: Vec<String> = Self::cells(row).into_iter().map(Option::unwrap_or_default).collect();
            out.push_str(&format!("{},{}\n", row.method.display_name(), cells.join(",")));
        }
        out
    }
}
