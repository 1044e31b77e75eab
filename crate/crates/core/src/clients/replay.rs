//! Record/replay cache.
//!
//! Every request is canonicalized (JSON with object keys sorted, no
//! insignificant whitespace, tagged with the service kind) and hashed with
//! SHA-256; the lowercase hex digest names one file under the cache
//! directory. Text responses live in `<key>.json`, audio in `<key>.wav`.
//! Entries are write-once: a key that already exists is never replaced.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{AudioClip, ChatClient, ChatRequest, ClientError, SpeechRecognizer, SpeechSynthesizer, SynthesisRequest};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    /// Talk to the backend, never touch the cache.
    #[default]
    Off,
    /// Serve cache hits, call the backend on a miss and store the answer.
    Record,
    /// Serve cache hits only; a miss is an error and no backend is called.
    Replay,
}

impl FromStr for ReplayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            other => Err(format!("unknown replay mode `{other}` (expected off|record|replay)")),
        }
    }
}

impl fmt::Display for ReplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Off => "off",
            Self::Record => "record",
            Self::Replay => "replay",
        })
    }
}

/// Serializes `value` with object keys sorted at every depth.
pub fn canonical_json(value: &Value) -> String {
    fn write(value: &Value, out: &mut String) {
        match value {
            Value::Object(map) => {
                let mut keys: Vec<_> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

/// Cache key for a request of the given service kind.
pub fn cache_key<T: Serialize>(kind: &str, request: &T) -> String {
    let body = serde_json::json!({
        "kind": kind,
        "request": serde_json::to_value(request).expect("request serializes"),
    });
    hex::encode(Sha256::digest(canonical_json(&body).as_bytes()))
}

pub fn chat_key(req: &ChatRequest) -> String {
    cache_key("chat", req)
}

pub fn synthesis_key(req: &SynthesisRequest) -> String {
    cache_key("synthesize", req)
}

pub fn transcription_key(clip: &AudioClip) -> String {
    let audio = hex::encode(Sha256::digest(&clip.bytes));
    cache_key("transcribe", &serde_json::json!({ "audio_sha256": audio }))
}

#[derive(Debug)]
pub struct ReplayCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

#[derive(Serialize, Deserialize)]
struct TextEntry {
    kind: String,
    request: Value,
    response: String,
}

impl ReplayCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ClientError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{key}.{ext}"))
    }

    pub fn get_text(&self, key: &str) -> Result<Option<String>, ClientError> {
        match std::fs::read_to_string(self.path(key, "json")) {
            Ok(text) => {
                let entry: TextEntry = serde_json::from_str(&text)
                    .map_err(|e| ClientError::Cache(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
                Ok(Some(entry.response))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn get_audio(&self, key: &str) -> Result<Option<AudioClip>, ClientError> {
        match std::fs::read(self.path(key, "wav")) {
            Ok(bytes) => AudioClip::from_wav(bytes).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Stores a text response. Returns `false` when the key already existed.
    pub fn put_text<T: Serialize>(
        &self,
        key: &str,
        kind: &str,
        request: &T,
        response: &str,
    ) -> Result<bool, ClientError> {
        let entry = TextEntry {
            kind: kind.to_string(),
            request: serde_json::to_value(request).expect("request serializes"),
            response: response.to_string(),
        };
        let mut body = serde_json::to_string_pretty(&entry).expect("entry serializes");
        body.push('\n');
        self.write_once(&self.path(key, "json"), body.as_bytes())
    }

    pub fn put_audio(&self, key: &str, clip: &AudioClip) -> Result<bool, ClientError> {
        self.write_once(&self.path(key, "wav"), &clip.bytes)
    }

    /// Writes to a temporary file then hard-links it into place, so readers
    /// never observe a partial entry and an existing key is never replaced.
    fn write_once(&self, path: &Path, bytes: &[u8]) -> Result<bool, ClientError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        if path.exists() {
            return Ok(false);
        }
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        let linked = std::fs::hard_link(&tmp, path);
        std::fs::remove_file(&tmp)?;
        match linked {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Ok(false),
            Err(e) => Err(e.into()),
        }
    }
}

/// Puts a [`ReplayCache`] in front of a backend.
///
/// With [`ReplayMode::Replay`] the inner backend is never called (and may be
/// absent).
pub struct Replaying<C> {
    inner: Option<C>,
    cache: std::sync::Arc<ReplayCache>,
    mode: ReplayMode,
}

impl<C> Replaying<C> {
    pub fn new(inner: Option<C>, cache: std::sync::Arc<ReplayCache>, mode: ReplayMode) -> Self {
        Self { inner, cache, mode }
    }

    pub fn mode(&self) -> ReplayMode {
        self.mode
    }

    fn backend(&self) -> Result<&C, ClientError> {
        self.inner
            .as_ref()
            .ok_or_else(|| ClientError::transport("no live backend configured"))
    }
}

#[async_trait]
impl<C: ChatClient> ChatClient for Replaying<C> {
    async fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        req.validate()?;
        if self.mode == ReplayMode::Off {
            return self.backend()?.complete(req).await;
        }
        let key = chat_key(req);
        if let Some(hit) = self.cache.get_text(&key)? {
            return Ok(hit);
        }
        if self.mode == ReplayMode::Replay {
            return Err(ClientError::ReplayMiss { key });
        }
        let response = self.backend()?.complete(req).await?;
        self.cache.put_text(&key, "chat", req, &response)?;
        Ok(response)
    }
}

#[async_trait]
impl<C: SpeechSynthesizer> SpeechSynthesizer for Replaying<C> {
    async fn synthesize(&self, req: &SynthesisRequest) -> Result<AudioClip, ClientError> {
        req.validate()?;
        if self.mode == ReplayMode::Off {
            return self.backend()?.synthesize(req).await;
        }
        let key = synthesis_key(req);
        if let Some(hit) = self.cache.get_audio(&key)? {
            return Ok(hit);
        }
        if self.mode == ReplayMode::Replay {
            return Err(ClientError::ReplayMiss { key });
        }
        let clip = self.backend()?.synthesize(req).await?;
        self.cache.put_audio(&key, &clip)?;
        Ok(clip)
    }
}

#[async_trait]
impl<C: SpeechRecognizer> SpeechRecognizer for Replaying<C> {
    async fn transcribe(&self, clip: &AudioClip) -> Result<String, ClientError> {
        if self.mode == ReplayMode::Off {
            return self.backend()?.transcribe(clip).await;
        }
        let key = transcription_key(clip);
        if let Some(hit) = self.cache.get_text(&key)? {
            return Ok(hit);
        }
        if self.mode == ReplayMode::Replay {
            return Err(ClientError::ReplayMiss { key });
        }
        let text = self.backend()?.transcribe(clip).await?;
        let audio = hex::encode(Sha256::digest(&clip.bytes));
        self.cache
            .put_text(&key, "transcribe", &serde_json::json!({ "audio_sha256": audio }), &text)?;
        Ok(text)
    }
}
