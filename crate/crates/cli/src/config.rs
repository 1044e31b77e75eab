//! Flag, environment and config-file resolution.
//!
//! Precedence is flags > environment > file > defaults. Relative paths in a
//! config file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use p2va_core::clients::{ChatSettings, ReplayMode, DEFAULT_IN_FLIGHT};
use p2va_core::corpus::{Clock, Endpoints, Method};
use p2va_core::pipeline::RenderMode;
use p2va_core::prompts::PromptTemplates;
use p2va_core::{default_schema, StyleSchema};

use crate::CliError;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_CACHE_DIR: &str = ".p2va-cache";
pub const DEFAULT_SAMPLE_SIZE: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "p2va",
    version,
    about = "Persona-to-voice-attribute conversion, evaluation and auditing"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Attribute schema JSON (defaults to the built-in preset)
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Directory of prompt template overrides
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    /// closed | open | baseline
    #[arg(long, global = true)]
    pub strategy: Option<Method>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of persona–transcript pairs to sample
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// off | record | replay
    #[arg(long, global = true)]
    pub replay: Option<ReplayMode>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Parent directory for run directories
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Concurrent requests per backend
    #[arg(long, global = true)]
    pub in_flight: Option<usize>,
    #[arg(long, global = true, env = "P2VA_LLM_URL")]
    pub llm_url: Option<String>,
    /// TTS sidecar URL, or mock:// for the built-in silent synthesizer
    #[arg(long, global = true, env = "P2VA_TTS_URL")]
    pub tts_url: Option<String>,
    /// ASR sidecar URL, or mock:// for the built-in echo recognizer
    #[arg(long, global = true, env = "P2VA_ASR_URL")]
    pub asr_url: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// template | paraphrase
    #[arg(long, global = true)]
    pub render: Option<RenderMode>,
    /// Pin record timestamps (RFC 3339) for byte-reproducible runs
    #[arg(long, global = true, hide = true)]
    pub fixed_time: Option<DateTime<Utc>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample pairs, convert personas and write a run directory
    Convert {
        /// Persona JSONL ({id?, persona})
        #[arg(long)]
        personas: PathBuf,
        /// Transcript JSONL ({id?, text})
        #[arg(long)]
        transcripts: PathBuf,
    },
    /// Render a voice attribute record into a description
    Render {
        /// Record JSON: a full record or a flat {dimension: value} object
        #[arg(long)]
        record: PathBuf,
    },
    /// Synthesize clips for a run, or one clip from --description/--text
    Synthesize {
        #[arg(long, conflicts_with_all = ["description", "text"])]
        run: Option<PathBuf>,
        #[arg(long, requires = "text")]
        description: Option<String>,
        #[arg(long, requires = "description")]
        text: Option<String>,
        /// Output file for a single clip
        #[arg(long, default_value = "out.wav")]
        wav: PathBuf,
    },
    /// Transcribe, score and tabulate a run
    Eval {
        #[arg(long)]
        run: PathBuf,
        /// JSONL {pair_id, utmos?, mos_human?}
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Also rate each record with the LLM judge
        #[arg(long)]
        judge: bool,
    },
    /// Bias audit over a closed-strategy run
    Audit {
        #[arg(long)]
        run: PathBuf,
        /// JSON {group: [labels]} overriding the tone grouping
        #[arg(long)]
        tone_groups: Option<PathBuf>,
    },
    /// HTTP API for the studio UI
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub strategy: Option<String>,
    pub schema: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub llm_url: Option<String>,
    pub tts_url: Option<String>,
    pub asr_url: Option<String>,
    pub replay: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub in_flight: Option<usize>,
    pub out: Option<PathBuf>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub render: Option<String>,
    pub tone_groups: Option<PathBuf>,
    pub bind: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.schema,
            &mut cfg.prompts,
            &mut cfg.cache_dir,
            &mut cfg.out,
            &mut cfg.tone_groups,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub strategy: Method,
    pub schema: StyleSchema,
    pub templates: PromptTemplates,
    pub endpoints: Endpoints,
    pub replay: ReplayMode,
    pub cache_dir: PathBuf,
    pub seed: u64,
    pub n: usize,
    pub in_flight: usize,
    pub out: PathBuf,
    pub chat: ChatSettings,
    pub render_mode: RenderMode,
    pub tone_groups: Option<PathBuf>,
    pub bind: String,
    pub clock: Clock,
}

fn parse_in<T: std::str::FromStr<Err = String>>(field: &str, v: Option<String>) -> Result<Option<T>, CliError> {
    v.map(|s| s.parse().map_err(|e| CliError::Usage(format!("config `{field}`: {e}"))))
        .transpose()
}

pub fn is_live(endpoint: &str) -> bool {
    endpoint.starts_with("http://") || endpoint.starts_with("https://")
}

impl RunConfig {
    pub fn resolve(args: &GlobalArgs, bind_flag: Option<&str>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let strategy = match args.strategy {
            Some(s) => s,
            None => parse_in("strategy", file.strategy)?.unwrap_or(Method::Closed),
        };
        let replay = match args.replay {
            Some(r) => r,
            None => parse_in("replay", file.replay)?.unwrap_or_default(),
        };
        let render_mode = match args.render {
            Some(r) => r,
            None => parse_in("render", file.render)?.unwrap_or_default(),
        };
        let schema_path = args.schema.clone().or(file.schema);
        let prompts_dir = args.prompts.clone().or(file.prompts);
        if strategy == Method::Baseline && (schema_path.is_some() || prompts_dir.is_some()) {
            return Err(CliError::Usage(
                "baseline strategy uses the persona text as-is; --schema/--prompts do not apply".into(),
            ));
        }
        let schema = match &schema_path {
            Some(p) => StyleSchema::load(p).map_err(|e| CliError::Usage(format!("schema {}: {e}", p.display())))?,
            None => default_schema(),
        };
        let templates = match &prompts_dir {
            Some(d) => {
                PromptTemplates::load_dir(d).map_err(|e| CliError::Usage(format!("prompts {}: {e}", d.display())))?
            }
            None => PromptTemplates::default(),
        };
        let endpoints = Endpoints {
            llm: args.llm_url.clone().or(file.llm_url),
            tts: args.tts_url.clone().or(file.tts_url),
            asr: args.asr_url.clone().or(file.asr_url),
        };
        if replay == ReplayMode::Replay {
            for e in [&endpoints.llm, &endpoints.tts, &endpoints.asr].into_iter().flatten() {
                if is_live(e) {
                    return Err(CliError::Usage(format!(
                        "--replay replay forbids live endpoints (got {e})"
                    )));
                }
            }
        }
        let in_flight = args.in_flight.or(file.in_flight).unwrap_or(DEFAULT_IN_FLIGHT);
        if in_flight == 0 {
            return Err(CliError::Usage("--in-flight must be at least 1".into()));
        }
        let defaults = ChatSettings::default();
        let chat = ChatSettings {
            model: args.model.clone().or(file.model).unwrap_or(defaults.model),
            temperature: file.temperature.unwrap_or(defaults.temperature),
            max_tokens: file.max_tokens.unwrap_or(defaults.max_tokens),
        };
        Ok(Self {
            strategy,
            schema,
            templates,
            endpoints,
            replay,
            cache_dir: args
                .cache_dir
                .clone()
                .or(file.cache_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR)),
            seed: args.seed.or(file.seed).unwrap_or(0),
            n: args.n.or(file.n).unwrap_or(DEFAULT_SAMPLE_SIZE),
            in_flight,
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("runs")),
            chat,
            render_mode,
            tone_groups: file.tone_groups,
            bind: bind_flag
                .map(str::to_string)
                .or(file.bind)
                .unwrap_or_else(|| DEFAULT_BIND.to_string()),
            clock: args.fixed_time.map_or(Clock::System, Clock::Fixed),
        })
    }
}
