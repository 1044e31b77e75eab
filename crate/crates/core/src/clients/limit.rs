//! Per-backend bounded concurrency.

use std::sync::Arc;

use async_trait::async_trait;
use tokio::sync::{Semaphore, SemaphorePermit};

use super::{AudioClip, ChatClient, ChatRequest, ClientError, SpeechRecognizer, SpeechSynthesizer, SynthesisRequest};

pub const DEFAULT_IN_FLIGHT: usize = 8;

#[derive(Debug, Clone)]
pub struct ConcurrencyLimit {
    semaphore: Arc<Semaphore>,
    limit: usize,
}

impl ConcurrencyLimit {
    pub fn new(limit: usize) -> Self {
        let limit = limit.max(1);
        Self {
            semaphore: Arc::new(Semaphore::new(limit)),
            limit,
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub async fn acquire(&self) -> SemaphorePermit<'_> {
        self.semaphore.acquire().await.expect("semaphore is never closed")
    }
}

impl Default for ConcurrencyLimit {
    fn default() -> Self {
        Self::new(DEFAULT_IN_FLIGHT)
    }
}

/// Wraps any backend so that at most `limit` calls are in flight at once.
pub struct Bounded<C> {
    inner: C,
    limit: ConcurrencyLimit,
}

impl<C> Bounded<C> {
    pub fn new(inner: C, limit: usize) -> Self {
        Self {
            inner,
            limit: ConcurrencyLimit::new(limit),
        }
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

#[async_trait]
impl<C: ChatClient> ChatClient for Bounded<C> {
    async fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        let _permit = self.limit.acquire().await;
        self.inner.complete(req).await
    }
}

#[async_trait]
impl<C: SpeechSynthesizer> SpeechSynthesizer for Bounded<C> {
    async fn synthesize(&self, req: &SynthesisRequest) -> Result<AudioClip, ClientError> {
        let _permit = self.limit.acquire().await;
        self.inner.synthesize(req).await
    }
}

#[async_trait]
impl<C: SpeechRecognizer> SpeechRecognizer for Bounded<C> {
    async fn transcribe(&self, clip: &AudioClip) -> Result<String, ClientError> {
        let _permit = self.limit.acquire().await;
        self.inner.transcribe(clip).await
    }
}
