//! Contracts for the three external model services (chat completion, speech
//! synthesis, speech recognition), their HTTP implementations, offline mocks
//! and a record/replay cache.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod audio;
pub mod http;
pub mod limit;
pub mod mock;
pub mod replay;

pub use audio::AudioClip;
pub use http::{HttpAsrClient, HttpChatClient, HttpTtsClient, RetryConfig};
pub use limit::{Bounded, ConcurrencyLimit, DEFAULT_IN_FLIGHT};
pub use mock::{Counting, EchoRecognizer, MockSynthesizer, ScriptedChat};
pub use replay::{ReplayCache, ReplayMode, Replaying};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport {
        message: String,
        status: Option<u16>,
        retry_after: Option<Duration>,
    },
    #[error("replay cache has no entry for key {key}")]
    ReplayMiss { key: String },
    #[error("invalid audio: {0}")]
    InvalidAudio(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("replay cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

impl ClientError {
    pub fn transport(message: impl Into<String>) -> Self {
        ClientError::Transport {
            message: message.into(),
            status: None,
            retry_after: None,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Transport { status, .. } => *status,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ClientError> {
        let invalid = |m: &str| Err(ClientError::InvalidRequest(m.to_string()));
        match self.messages.first() {
            None => return invalid("chat request has no messages"),
            Some(m) if m.role == Role::Assistant => return invalid("first message must be system or user"),
            _ => {}
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return invalid("temperature must be a finite number >= 0");
        }
        if self.max_tokens == 0 {
            return invalid("max_tokens must be positive");
        }
        Ok(())
    }
}

/// Model identity and sampling settings shared by every chat call a run makes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ChatSettings {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".to_string(),
            temperature: 0.0,
            max_tokens: 512,
        }
    }
}

impl ChatSettings {
    pub fn request(&self, system: &str, user: &str) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub description: String,
    #[serde(rename = "text")]
    pub transcript: String,
}

impl SynthesisRequest {
    pub fn new(description: impl Into<String>, transcript: impl Into<String>) -> Self {
        Self {
            description: description.into(),
            transcript: transcript.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.description.trim().is_empty() {
            return Err(ClientError::InvalidRequest("empty description".into()));
        }
        if self.transcript.trim().is_empty() {
            return Err(ClientError::InvalidRequest("empty transcript".into()));
        }
        Ok(())
    }
}

#[async_trait]
pub trait ChatClient: Send + Sync {
    /// Returns the assistant message content.
    async fn complete(&self, req: &ChatRequest) -> Result<String, ClientError>;
}

#[async_trait]
pub trait SpeechSynthesizer: Send + Sync {
    async fn synthesize(&self, req: &SynthesisRequest) -> Result<AudioClip, ClientError>;
}

#[async_trait]
pub trait SpeechRecognizer: Send + Sync {
    async fn transcribe(&self, clip: &AudioClip) -> Result<String, ClientError>;
}

#[async_trait]
impl<T: ChatClient + ?Sized> ChatClient for Arc<T> {
    async fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        (**self).complete(req).await
    }
}

#[async_trait]
impl<T: SpeechSynthesizer + ?Sized> SpeechSynthesizer for Arc<T> {
    async fn synthesize(&self, req: &SynthesisRequest) -> Result<AudioClip, ClientError> {
        (**self).synthesize(req).await
    }
}

#[async_trait]
impl<T: SpeechRecognizer + ?Sized> SpeechRecognizer for Arc<T> {
    async fn transcribe(&self, clip: &AudioClip) -> Result<String, ClientError> {
        (**self).transcribe(clip).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_preconditions() {
        let ok = ChatSettings::default().request("sys", "user");
        ok.validate().unwrap();

        let mut bad = ok.clone();
        bad.messages.clear();
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.messages[0].role = Role::Assistant;
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.temperature = -0.5;
        assert!(bad.validate().is_err());

        let mut bad = ok;
        bad.max_tokens = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn synthesis_request_uses_text_on_the_wire() {
        let req = SynthesisRequest::new("A calm voice.", "hello");
        let json = serde_json::to_value(&req).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"description": "A calm voice.", "text": "hello"})
        );
        assert!(SynthesisRequest::new("d", " ").validate().is_err());
    }
}
