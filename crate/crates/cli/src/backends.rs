//! Builds chat/TTS/ASR clients from resolved config, with optional replay caching.

use std::sync::Arc;

use p2va_core::clients::{
    ChatClient, EchoRecognizer, HttpAsrClient, HttpChatClient, HttpTtsClient, MockSynthesizer, ReplayCache, ReplayMode,
    Replaying, SpeechRecognizer, SpeechSynthesizer,
};

use crate::config::RunConfig;
use crate::CliError;

pub const MOCK_SCHEME: &str = "mock://";

#[derive(Clone, Default)]
pub struct Backends {
    pub chat: Option<Arc<dyn ChatClient>>,
    pub tts: Option<Arc<dyn SpeechSynthesizer>>,
    pub asr: Option<Arc<dyn SpeechRecognizer>>,
}

fn bad_endpoint(which: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{which} endpoint: {e}"))
}

enum Slot<T: ?Sized> {
    None,
    Mock(Arc<T>),
    Live(Arc<T>),
}

impl<T: ?Sized> Slot<T> {
    fn parts(self) -> (Option<Arc<T>>, Option<Arc<T>>) {
        match self {
            Slot::None => (None, None),
            Slot::Mock(m) => (Some(m), None),
            Slot::Live(l) => (None, Some(l)),
        }
    }
}

/// Mocks are used as-is; live clients go through the cache unless replay is
/// off; in replay mode an empty slot still serves recorded answers.
macro_rules! wire {
    ($slot:expr, $cache:expr, $mode:expr, $tr:path) => {{
        let (mock, live) = $slot.parts();
        match (mock, $cache) {
            (Some(m), _) => Some(m),
            (None, None) => live,
            (None, Some(cache)) => (live.is_some() || $mode == ReplayMode::Replay)
                .then(|| Arc::new(Replaying::new(live, cache.clone(), $mode)) as Arc<dyn $tr>),
        }
    }};
}

impl Backends {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        let chat: Slot<dyn ChatClient> = match cfg.endpoints.llm.as_deref() {
            None => Slot::None,
            Some(url) if url.starts_with(MOCK_SCHEME) => {
                return Err(CliError::Usage(
                    "there is no mock LLM; use --replay replay instead".into(),
                ))
            }
            Some(url) => Slot::Live(Arc::new(
                HttpChatClient::from_env(url)
                    .map_err(|e| bad_endpoint("llm", e))?
                    .with_in_flight(cfg.in_flight),
            )),
        };
        let tts: Slot<dyn SpeechSynthesizer> = match cfg.endpoints.tts.as_deref() {
            None => Slot::None,
            Some(url) if url.starts_with(MOCK_SCHEME) => Slot::Mock(Arc::new(MockSynthesizer)),
            Some(url) => Slot::Live(Arc::new(
                HttpTtsClient::new(url)
                    .map_err(|e| bad_endpoint("tts", e))?
                    .with_in_flight(cfg.in_flight),
            )),
        };
        let asr: Slot<dyn SpeechRecognizer> = match cfg.endpoints.asr.as_deref() {
            None => Slot::None,
            Some(url) if url.starts_with(MOCK_SCHEME) => Slot::Mock(Arc::new(EchoRecognizer)),
            Some(url) => Slot::Live(Arc::new(
                HttpAsrClient::new(url)
                    .map_err(|e| bad_endpoint("asr", e))?
                    .with_in_flight(cfg.in_flight),
            )),
        };
        let mode = cfg.replay;
        let cache = match mode {
            ReplayMode::Off => None,
            _ => Some(Arc::new(ReplayCache::open(&cfg.cache_dir).map_err(|e| {
                CliError::Usage(format!("replay cache {}: {e}", cfg.cache_dir.display()))
            })?)),
        };
        Ok(Self {
            chat: wire!(chat, &cache, mode, ChatClient),
            tts: wire!(tts, &cache, mode, SpeechSynthesizer),
            asr: wire!(asr, &cache, mode, SpeechRecognizer),
        })
    }
}
