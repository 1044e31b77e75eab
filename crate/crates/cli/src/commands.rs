use std::path::{Path, PathBuf};

use p2va_core::audit::{build_audit, render_audit, AuditFormat, ToneGroups};
use p2va_core::clients::SynthesisRequest;
use p2va_core::convert::parse_closed_response;
use p2va_core::corpus::{
    load_personas, load_transcripts, persist_run, read_run, sample_pairs, write_records, Method, RunManifest,
};
use p2va_core::eval::{evaluate_run, load_scores, EvalClients, EvalOptions, Scores};
use p2va_core::pipeline::{synthesize_records, Pipeline, RenderMode};
use p2va_core::render::{render_paraphrase, render_template};
use p2va_core::{Converter, StyleDescription, VoiceAttributeRecord};

use crate::backends::Backends;
use crate::config::RunConfig;
use crate::CliError;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

pub fn converter(cfg: &RunConfig) -> Converter {
    let mut c = Converter::new(cfg.schema.clone());
    c.templates = cfg.templates.clone();
    c.chat = cfg.chat.clone();
    c
}

/// Fails when more than half of `total` items failed.
fn check_majority(failed: usize, total: usize, what: &str) -> Result<(), CliError> {
    if failed * 2 > total {
        return Err(runtime(format!("{failed} of {total} {what} failed")));
    }
    Ok(())
}

pub fn manifest(cfg: &RunConfig, sample_size: usize) -> RunManifest {
    RunManifest {
        run_id: String::new(),
        method: cfg.strategy,
        seed: cfg.seed,
        sample_size,
        schema_version: cfg.schema.version.clone(),
        schema_hash: cfg.schema.content_hash(),
        prompt_hashes: cfg.templates.hashes(),
        render_mode: cfg.render_mode.to_string(),
        chat: cfg.chat.clone(),
        endpoints: cfg.endpoints.clone(),
        replay: cfg.replay,
        config_hash: String::new(),
    }
    .seal()
}

/// Returns the run directory.
pub async fn convert(cfg: &RunConfig, personas: &Path, transcripts: &Path) -> Result<PathBuf, CliError> {
    let personas = load_personas(personas).map_err(usage)?;
    let transcripts = load_transcripts(transcripts).map_err(usage)?;
    let pairs = sample_pairs(&personas.items, &transcripts.items, cfg.n, cfg.seed).map_err(usage)?;
    let backends = Backends::from_config(cfg)?;
    if cfg.strategy != Method::Baseline && backends.chat.is_none() {
        return Err(usage("closed/open strategies need --llm-url or --replay replay"));
    }
    let converter = converter(cfg);
    let pipeline = Pipeline {
        converter: &converter,
        chat: backends.chat.as_deref(),
        render_mode: cfg.render_mode,
        clock: cfg.clock,
    };
    let records = pipeline.run(&pairs, cfg.strategy).await;
    let manifest = manifest(cfg, records.len());
    let dir = cfg.out.join(&manifest.run_id);
    persist_run(&records, &manifest, &dir).map_err(runtime)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    tracing::info!(run = %manifest.run_id, total = records.len(), failed, "conversion finished");
    check_majority(failed, records.len(), "conversions")?;
    Ok(dir)
}

/// Accepts a full record or a flat `{dimension: value}` object.
pub fn read_record(cfg: &RunConfig, path: &Path) -> Result<VoiceAttributeRecord, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if let Ok(record) = serde_json::from_str::<VoiceAttributeRecord>(&text) {
        return Ok(record);
    }
    parse_closed_response(&text, &cfg.schema).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub async fn render(cfg: &RunConfig, record: &VoiceAttributeRecord) -> Result<StyleDescription, CliError> {
    match cfg.render_mode {
        RenderMode::Template => render_template(record, &cfg.schema).map_err(usage),
        RenderMode::Paraphrase => {
            let chat = Backends::from_config(cfg)?
                .chat
                .ok_or_else(|| usage("paraphrase rendering needs --llm-url or --replay replay"))?;
            render_paraphrase(record, &cfg.schema, &cfg.templates, &cfg.chat, chat.as_ref())
                .await
                .map_err(runtime)
        }
    }
}

pub async fn synthesize_run(cfg: &RunConfig, run: &Path) -> Result<(), CliError> {
    let (_, mut records) = read_run(run).map_err(usage)?;
    let tts = Backends::from_config(cfg)?
        .tts
        .ok_or_else(|| usage("synthesis needs --tts-url"))?;
    let failed = synthesize_records(&mut records, tts.as_ref(), run)
        .await
        .map_err(runtime)?;
    write_records(&records, run).map_err(runtime)?;
    check_majority(failed, records.len(), "syntheses")
}

pub async fn synthesize_one(cfg: &RunConfig, description: &str, text: &str, wav: &Path) -> Result<(), CliError> {
    let req = SynthesisRequest::new(description, text);
    req.validate().map_err(usage)?;
    let tts = Backends::from_config(cfg)?
        .tts
        .ok_or_else(|| usage("synthesis needs --tts-url"))?;
    let clip = tts.synthesize(&req).await.map_err(runtime)?;
    std::fs::write(wav, &clip.bytes).map_err(|e| runtime(format!("{}: {e}", wav.display())))
}

/// Writes eval.md, eval.csv and eval.json into the run directory; returns the Markdown table.
pub async fn eval(cfg: &RunConfig, run: &Path, scores: Option<&Path>, judge: bool) -> Result<String, CliError> {
    let (_, mut records) = read_run(run).map_err(usage)?;
    let scores = match scores {
        Some(p) => load_scores(p).map_err(usage)?,
        None => Scores::new(),
    };
    let backends = Backends::from_config(cfg)?;
    let asr = backends
        .asr
        .clone()
        .ok_or_else(|| usage("evaluation needs --asr-url"))?;
    let judge_client = match judge {
        true => Some(
            backends
                .chat
                .clone()
                .ok_or_else(|| usage("--judge needs --llm-url or --replay replay"))?,
        ),
        false => None,
    };
    let clients = EvalClients {
        tts: backends.tts.as_deref(),
        asr: asr.as_ref(),
        judge: judge_client.as_deref(),
    };
    let opts = EvalOptions {
        run_dir: Some(run.to_path_buf()),
        templates: cfg.templates.clone(),
        judge_settings: cfg.chat.clone(),
    };
    let outcome = evaluate_run(&mut records, &clients, &scores, &opts)
        .await
        .map_err(runtime)?;
    write_records(&records, run).map_err(runtime)?;
    let markdown = outcome.table.to_markdown();
    write_file(&run.join("eval.md"), &markdown)?;
    write_file(&run.join("eval.csv"), &outcome.table.to_csv())?;
    let json = serde_json::json!({
        "table": outcome.table,
        "results": outcome.results,
        "skipped": outcome.skipped,
    });
    write_file(&run.join("eval.json"), &format!("{json:#}\n"))?;
    Ok(markdown)
}

/// Writes audit.md, audit.csv and audit.json into the run directory; returns the Markdown.
pub fn audit(cfg: &RunConfig, run: &Path, tone_groups: Option<&Path>) -> Result<String, CliError> {
    let (_, records) = read_run(run).map_err(usage)?;
    let closed: Vec<_> = records
        .iter()
        .filter(|r| r.method == Method::Closed)
        .filter_map(|r| {
            r.conversion
                .as_ref()?
                .record
                .clone()
                .map(|rec| (r.persona_text.clone(), rec))
        })
        .collect();
    if closed.is_empty() {
        return Err(usage(format!("{} has no closed-strategy records", run.display())));
    }
    let groups = match tone_groups.or(cfg.tone_groups.as_deref()) {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            ToneGroups::from_json(&text).map_err(usage)?
        }
        None => ToneGroups::default(),
    };
    let (texts, recs): (Vec<String>, Vec<VoiceAttributeRecord>) = closed.into_iter().unzip();
    let report = build_audit(&recs, Some(&texts), &cfg.schema, &groups);
    let markdown = render_audit(&report, AuditFormat::Markdown);
    write_file(&run.join("audit.md"), &markdown)?;
    write_file(&run.join("audit.csv"), &render_audit(&report, AuditFormat::Csv))?;
    write_file(&run.join("audit.json"), &render_audit(&report, AuditFormat::Json))?;
    Ok(markdown)
}
