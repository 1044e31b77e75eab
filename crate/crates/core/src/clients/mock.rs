//! Offline backends used by tests and by `mock` endpoints.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;

use super::{AudioClip, ChatClient, ChatRequest, ClientError, SpeechRecognizer, SpeechSynthesizer, SynthesisRequest};

pub const MOCK_SAMPLE_RATE: u32 = 16_000;

/// Returns one second of silence; the transcript rides along in a note chunk
/// so that [`EchoRecognizer`] can hand it back.
#[derive(Debug, Default, Clone)]
pub struct MockSynthesizer;

#[async_trait]
impl SpeechSynthesizer for MockSynthesizer {
    async fn synthesize(&self, req: &SynthesisRequest) -> Result<AudioClip, ClientError> {
        req.validate()?;
        Ok(AudioClip::silence_with_note(1.0, MOCK_SAMPLE_RATE, &req.transcript))
    }
}

/// Reads back the transcript a [`MockSynthesizer`] embedded; plain silence
/// transcribes to the empty string.
#[derive(Debug, Default, Clone)]
pub struct EchoRecognizer;

#[async_trait]
impl SpeechRecognizer for EchoRecognizer {
    async fn transcribe(&self, clip: &AudioClip) -> Result<String, ClientError> {
        Ok(clip.note().unwrap_or_default())
    }
}

/// Chat client answering from a fixed script, one response per call.
#[derive(Debug)]
pub struct ScriptedChat {
    responses: Mutex<std::collections::VecDeque<String>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    /// Requests received so far, in order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().clone()
    }
}

#[async_trait]
impl ChatClient for ScriptedChat {
    async fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        self.seen.lock().unwrap().push(req.clone());
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| ClientError::transport("scripted chat exhausted"))
    }
}

/// Counts calls reaching the wrapped backend.
#[derive(Debug, Default)]
pub struct Counting<C> {
    inner: C,
    calls: AtomicUsize,
}

impl<C> Counting<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl<C: ChatClient> ChatClient for Counting<C> {
    async fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req).await
    }
}

#[async_trait]
impl<C: SpeechSynthesizer> SpeechSynthesizer for Counting<C> {
    async fn synthesize(&self, req: &SynthesisRequest) -> Result<AudioClip, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.synthesize(req).await
    }
}

#[async_trait]
impl<C: SpeechRecognizer> SpeechRecognizer for Counting<C> {
    async fn transcribe(&self, clip: &AudioClip) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.transcribe(clip).await
    }
}
