//! Persona → record → description → clip orchestration over sampled pairs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use futures::future::join_all;
use serde::{Deserialize, Serialize};

use crate::clients::{ChatClient, SpeechSynthesizer, SynthesisRequest};
use crate::convert::{Converter, PersonaDescription};
use crate::corpus::{Clock, Method, RunRecord, Transcript, AUDIO_DIR};
use crate::render::{render_paraphrase, render_template, DescriptionOrigin, StyleDescription};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    #[default]
    Template,
    Paraphrase,
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RenderMode::Template => "template",
            RenderMode::Paraphrase => "paraphrase",
        })
    }
}

impl FromStr for RenderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "template" => Ok(Self::Template),
            "paraphrase" => Ok(Self::Paraphrase),
            other => Err(format!("unknown render mode `{other}` (expected template|paraphrase)")),
        }
    }
}

/// Pair ids are 1-based sample positions, zero-padded so they sort.
pub fn pair_id(index: usize) -> String {
    format!("{:06}", index + 1)
}

pub struct Pipeline<'a> {
    pub converter: &'a Converter,
    /// Required for the closed and open methods and for paraphrasing.
    pub chat: Option<&'a dyn ChatClient>,
    pub render_mode: RenderMode,
    pub clock: Clock,
}

impl Pipeline<'_> {
    async fn describe(
        &self,
        persona: &PersonaDescription,
        method: Method,
    ) -> Result<(Option<crate::ConversionResult>, String, Option<DescriptionOrigin>), String> {
        let Some(strategy) = method.strategy() else {
            return Ok((None, persona.text.clone(), None));
        };
        let chat = self.chat.ok_or_else(|| "no chat backend configured".to_string())?;
        let result = self
            .converter
            .convert(persona, strategy, chat)
            .await
            .map_err(|e| e.to_string())?;
        let description = match (&result.record, &result.description) {
            (_, Some(d)) => d.clone(),
            (Some(record), None) => self.render(record, chat).await?,
            (None, None) => return Err("conversion produced nothing".into()),
        };
        Ok((Some(result), description.text, Some(description.origin)))
    }

    async fn render(
        &self,
        record: &crate::VoiceAttributeRecord,
        chat: &dyn ChatClient,
    ) -> Result<StyleDescription, String> {
        let c = self.converter;
        match self.render_mode {
            RenderMode::Template => render_template(record, &c.schema),
            RenderMode::Paraphrase => render_paraphrase(record, &c.schema, &c.templates, &c.chat, chat).await,
        }
        .map_err(|e| e.to_string())
    }

    async fn run_pair(
        &self,
        index: usize,
        persona: &PersonaDescription,
        transcript: &Transcript,
        method: Method,
    ) -> RunRecord {
        let mut record = RunRecord {
            pair_id: pair_id(index),
            persona_id: persona.id.clone(),
            transcript_id: transcript.id.clone(),
            method,
            persona_text: persona.text.clone(),
            transcript_text: transcript.text.clone(),
            conversion: None,
            description: None,
            description_origin: None,
            audio: None,
            metrics: None,
            error: None,
            created_at: self.clock.now(),
        };
        match self.describe(persona, method).await {
            Ok((conversion, text, origin)) => {
                record.conversion = conversion;
                record.description = Some(text);
                record.description_origin = origin;
            }
            Err(e) => {
                tracing::warn!(pair_id = %record.pair_id, error = %e, "conversion failed");
                record.error = Some(e);
            }
        }
        record
    }

    /// Converts and renders every pair; failures are kept as records with `error` set.
    pub async fn run(&self, pairs: &[(PersonaDescription, Transcript)], method: Method) -> Vec<RunRecord> {
        join_all(
            pairs
                .iter()
                .enumerate()
                .map(|(i, (p, t))| self.run_pair(i, p, t, method)),
        )
        .await
    }
}

/// Synthesizes a clip for every described record lacking one and saves it
/// under `run_dir/audio/`. Returns how many records failed.
pub async fn synthesize_records(
    records: &mut [RunRecord],
    tts: &dyn SpeechSynthesizer,
    run_dir: &Path,
) -> std::io::Result<usize> {
    std::fs::create_dir_all(run_dir.join(AUDIO_DIR))?;
    let clips = join_all(records.iter().map(|r| async move {
        match (&r.description, &r.audio, &r.error) {
            (Some(d), None, None) => Some(tts.synthesize(&SynthesisRequest::new(d, &r.transcript_text)).await),
            _ => None,
        }
    }))
    .await;
    let mut failed = 0;
    for (record, clip) in records.iter_mut().zip(clips) {
        match clip {
            Some(Ok(clip)) => {
                let rel = format!("{AUDIO_DIR}/{}-{}.wav", record.method, record.pair_id);
                std::fs::write(run_dir.join(&rel), &clip.bytes)?;
                record.audio = Some(rel);
            }
            Some(Err(e)) => {
                tracing::warn!(pair_id = %record.pair_id, error = %e, "synthesis failed");
                failed += 1;
            }
            None => {}
        }
    }
    Ok(failed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::{MockSynthesizer, ScriptedChat};
    use crate::schema::default_schema;

    fn pairs() -> Vec<(PersonaDescription, Transcript)> {
        vec![(
            PersonaDescription::new("1", "Mrs. Simone Huis Veld leads a bank.").unwrap(),
            Transcript {
                id: "LJ001".into(),
                text: "Printing, in the only sense.".into(),
            },
        )]
    }

    #[tokio::test]
    async fn baseline_uses_persona_verbatim_without_llm() {
        let converter = Converter::new(default_schema());
        let p = Pipeline {
            converter: &converter,
            chat: None,
            render_mode: RenderMode::Template,
            clock: Clock::default(),
        };
        let recs = p.run(&pairs(), Method::Baseline).await;
        assert_eq!(
            recs[0].description.as_deref(),
            Some("Mrs. Simone Huis Veld leads a bank.")
        );
        assert!(recs[0].conversion.is_none());
        assert_eq!(recs[0].pair_id, "000001");
    }

    #[tokio::test]
    async fn closed_method_renders_template() {
        let converter = Converter::new(default_schema());
        let chat = ScriptedChat::new([r#"{"gender": "Female (Mrs. Simone)", "tone": "Calm"}"#]);
        let p = Pipeline {
            converter: &converter,
            chat: Some(&chat),
            render_mode: RenderMode::Template,
            clock: Clock::default(),
        };
        let recs = p.run(&pairs(), Method::Closed).await;
        let d = recs[0].description.as_deref().unwrap();
        assert!(d.contains("female"), "{d}");
        assert_eq!(recs[0].description_origin, Some(DescriptionOrigin::Template));
    }

    #[tokio::test]
    async fn missing_chat_is_a_record_error() {
        let converter = Converter::new(default_schema());
        let p = Pipeline {
            converter: &converter,
            chat: None,
            render_mode: RenderMode::Template,
            clock: Clock::default(),
        };
        let recs = p.run(&pairs(), Method::Open).await;
        assert!(recs[0].error.is_some());
    }

    #[tokio::test]
    async fn synthesis_writes_clips() {
        let converter = Converter::new(default_schema());
        let p = Pipeline {
            converter: &converter,
            chat: None,
            render_mode: RenderMode::Template,
            clock: Clock::default(),
        };
        let mut recs = p.run(&pairs(), Method::Baseline).await;
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            synthesize_records(&mut recs, &MockSynthesizer, dir.path())
                .await
                .unwrap(),
            0
        );
        let rel = recs[0].audio.clone().unwrap();
        assert_eq!(rel, "audio/baseline-000001.wav");
        assert!(dir.path().join(rel).exists());
    }
}
