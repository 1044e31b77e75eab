//! HTTP backends.
//!
//! Chat uses the OpenAI-compatible `/v1/chat/completions` shape. Synthesis and
//! recognition use the sidecar contract: `POST /synthesize` with
//! `{description, text}` returning `audio/wav`, and `POST /transcribe` with a
//! WAV body returning `{text}`.

use std::time::Duration;

use async_trait::async_trait;
use reqwest::{RequestBuilder, Response, StatusCode};
use serde::Deserialize;

use super::limit::ConcurrencyLimit;
use super::{AudioClip, ChatClient, ChatRequest, ClientError, SpeechRecognizer, SpeechSynthesizer, SynthesisRequest};

/// Environment variable holding the bearer token for the chat endpoint.
pub const LLM_KEY_ENV: &str = "P2VA_LLM_KEY";

/// Exponential backoff applied to 429 and 5xx responses only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryConfig {
    pub base: Duration,
    pub factor: u32,
    pub max_retries: u32,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            factor: 2,
            max_retries: 3,
        }
    }
}

impl RetryConfig {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base * self.factor.saturating_pow(retry)
    }
}

#[derive(Debug, Clone)]
struct Backend {
    http: reqwest::Client,
    base_url: String,
    retry: RetryConfig,
    limit: ConcurrencyLimit,
}

impl Backend {
    fn new(base_url: &str, timeout: Duration) -> Result<Self, ClientError> {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::transport(format!("building HTTP client: {e}")))?;
        Ok(Self {
            http,
            base_url: base_url.trim_end_matches('/').to_string(),
            retry: RetryConfig::default(),
            limit: ConcurrencyLimit::default(),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url, path.trim_start_matches('/'))
    }

    async fn send(&self, build: impl Fn() -> RequestBuilder) -> Result<Response, ClientError> {
        let _permit = self.limit.acquire().await;
        let mut retry = 0;
        loop {
            let response = build()
                .send()
                .await
                .map_err(|e| ClientError::transport(e.to_string()))?;
            let status = response.status();
            if status.is_success() {
                return Ok(response);
            }
            let retry_after = response
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            let body = response.text().await.unwrap_or_default();
            let err = ClientError::Transport {
                message: truncate(&body, 300),
                status: Some(status.as_u16()),
                retry_after,
            };
            let retryable = status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error();
            if !retryable || retry >= self.retry.max_retries {
                return Err(err);
            }
            let delay = retry_after.unwrap_or_else(|| self.retry.delay(retry));
            tracing::warn!(
                status = status.as_u16(),
                ?delay,
                "retrying request to {}",
                self.base_url
            );
            tokio::time::sleep(delay).await;
            retry += 1;
        }
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

macro_rules! backend_builders {
    ($ty:ty) => {
        impl $ty {
            pub fn with_retry(mut self, retry: RetryConfig) -> Self {
                self.backend.retry = retry;
                self
            }

            pub fn with_in_flight(mut self, limit: usize) -> Self {
                self.backend.limit = ConcurrencyLimit::new(limit);
                self
            }

            pub fn base_url(&self) -> &str {
                &self.backend.base_url
            }
        }
    };
}

#[derive(Debug, Clone)]
pub struct HttpChatClient {
    backend: Backend,
    api_key: Option<String>,
}

backend_builders!(HttpChatClient);

impl HttpChatClient {
    pub fn new(base_url: &str, api_key: Option<String>) -> Result<Self, ClientError> {
        Ok(Self {
            backend: Backend::new(base_url, Duration::from_secs(120))?,
            api_key,
        })
    }

    /// Reads the bearer token from `P2VA_LLM_KEY`.
    pub fn from_env(base_url: &str) -> Result<Self, ClientError> {
        Self::new(base_url, std::env::var(LLM_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    fn endpoint(&self) -> String {
        let base = self
            .backend
            .base_url
            .strip_suffix("/v1")
            .unwrap_or(&self.backend.base_url);
        format!("{base}/v1/chat/completions")
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[async_trait]
impl ChatClient for HttpChatClient {
    async fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        req.validate()?;
        let url = self.endpoint();
        let response = self
            .backend
            .send(|| {
                let builder = self.backend.http.post(&url).json(req);
                match &self.api_key {
                    Some(key) => builder.bearer_auth(key),
                    None => builder,
                }
            })
            .await?;
        let body: CompletionResponse = response
            .json()
            .await
            .map_err(|e| ClientError::transport(format!("decoding completion: {e}")))?;
        body.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::transport("completion has no message content"))
    }
}

#[derive(Debug, Clone)]
pub struct HttpTtsClient {
    backend: Backend,
}

backend_builders!(HttpTtsClient);

impl HttpTtsClient {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        Ok(Self {
            backend: Backend::new(base_url, Duration::from_secs(300))?,
        })
    }
}

#[async_trait]
impl SpeechSynthesizer for HttpTtsClient {
    async fn synthesize(&self, req: &SynthesisRequest) -> Result<AudioClip, ClientError> {
        req.validate()?;
        let url = self.backend.url("synthesize");
        let response = self.backend.send(|| self.backend.http.post(&url).json(req)).await?;
        let bytes = response
            .bytes()
            .await
            .map_err(|e| ClientError::transport(e.to_string()))?;
        AudioClip::from_wav(bytes.to_vec())
    }
}

#[derive(Debug, Clone)]
pub struct HttpAsrClient {
    backend: Backend,
}

backend_builders!(HttpAsrClient);

impl HttpAsrClient {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        Ok(Self {
            backend: Backend::new(base_url, Duration::from_secs(300))?,
        })
    }
}

#[derive(Deserialize)]
struct TranscribeResponse {
    text: String,
}

#[async_trait]
impl SpeechRecognizer for HttpAsrClient {
    async fn transcribe(&self, clip: &AudioClip) -> Result<String, ClientError> {
        let url = self.backend.url("transcribe");
        let response = self
            .backend
            .send(|| {
                self.backend
                    .http
                    .post(&url)
                    .header(reqwest::header::CONTENT_TYPE, "audio/wav")
                    .body(clip.bytes.clone())
            })
            .await?;
        let body: TranscribeResponse = response
            .json()
            .await
            .map_err(|e| ClientError::transport(format!("decoding transcription: {e}")))?;
        Ok(body.text)
    }
}
