//! Persona-to-voice conversion.
//!
//! Two strategies: `Closed` asks the model to fill every slot of a
//! [`StyleSchema`] and yields a [`VoiceAttributeRecord`]; `Open` asks for a
//! free-form description and yields a [`StyleDescription`]. Malformed answers
//! are retried with a repair instruction appended to the user message.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ChatClient, ChatSettings, ClientError};
use crate::prompts::PromptTemplates;
use crate::render::StyleDescription;
use crate::schema::{AttributeClass, StyleSchema, VoiceAttributeRecord};

pub mod parse;

pub use parse::{clean_description, parse_closed_response, parse_open_response, ParseError};

pub const MAX_PERSONA_CHARS: usize = 4000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PersonaError {
    #[error("persona text is empty")]
    Empty,
    #[error("persona text has {0} characters (max {MAX_PERSONA_CHARS})")]
    TooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaDescription {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl PersonaDescription {
    /// Over-long text is rejected rather than truncated.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, PersonaError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PersonaError::Empty);
        }
        let chars = text.chars().count();
        if chars > MAX_PERSONA_CHARS {
            return Err(PersonaError::TooLong(chars));
        }
        Ok(Self {
            id: id.into(),
            text,
            source: None,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionResult {
    pub persona_id: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<VoiceAttributeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<StyleDescription>,
    pub attempts: u32,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub repair_suffix: String,
    pub open_repair_suffix: String,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            repair_suffix: "Return only one JSON object, no prose.".to_string(),
            open_repair_suffix: "Return only the voice description, no prose.".to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConversionError {
    #[error("conversion failed after {attempts} attempts: {last_error}")]
    ConversionFailed {
        attempts: u32,
        last_error: ParseError,
        raw_response: String,
    },
    #[error(transparent)]
    Transport(#[from] ClientError),
}

/// One line per dimension: closed ones list their labels, open ones are free text.
pub fn label_inventory(schema: &StyleSchema) -> String {
    schema
        .dimensions
        .iter()
        .map(|d| match d.class {
            AttributeClass::Closed => format!("- {}: one of {}", d.name, d.canonical_labels.join(", ")),
            AttributeClass::Open => format!("- {}: free text", d.name),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_closed_prompt(
    persona: &PersonaDescription,
    schema: &StyleSchema,
    templates: &PromptTemplates,
) -> PromptBundle {
    let keys = schema
        .dimensions
        .iter()
        .map(|d| format!("\"{}\"", d.name))
        .collect::<Vec<_>>()
        .join(", ");
    let inventory = label_inventory(schema);
    PromptBundle {
        system: templates.get("closed_system").trim().to_string(),
        user: templates.render(
            "closed_user",
            &[
                ("persona", persona.text.trim()),
                ("inventory", &inventory),
                ("keys", &keys),
            ],
        ),
        strategy: Strategy::Closed,
        schema_version: Some(schema.version.clone()),
    }
}

pub fn build_open_prompt(persona: &PersonaDescription, templates: &PromptTemplates) -> PromptBundle {
    PromptBundle {
        system: templates.get("open_system").trim().to_string(),
        user: templates.render("open_user", &[("persona", persona.text.trim())]),
        strategy: Strategy::Open,
        schema_version: None,
    }
}

/// Everything a conversion needs besides the persona and the client.
#[derive(Debug, Clone)]
pub struct Converter {
    pub schema: StyleSchema,
    pub templates: PromptTemplates,
    pub chat: ChatSettings,
    pub policy: RetryPolicy,
}

impl Converter {
    pub fn new(schema: StyleSchema) -> Self {
        Self {
            schema,
            templates: PromptTemplates::default(),
            chat: ChatSettings::default(),
            policy: RetryPolicy::default(),
        }
    }

    pub fn bundle(&self, persona: &PersonaDescription, strategy: Strategy) -> PromptBundle {
        match strategy {
            Strategy::Closed => build_closed_prompt(persona, &self.schema, &self.templates),
            Strategy::Open => build_open_prompt(persona, &self.templates),
        }
    }

    /// Builds the prompt, calls the model and parses; on a parse failure
    /// retries up to `policy.max_attempts` with the repair suffix appended.
    pub async fn convert(
        &self,
        persona: &PersonaDescription,
        strategy: Strategy,
        llm: &dyn ChatClient,
    ) -> Result<ConversionResult, ConversionError> {
        let bundle = self.bundle(persona, strategy);
        let suffix = match strategy {
            Strategy::Closed => &self.policy.repair_suffix,
            Strategy::Open => &self.policy.open_repair_suffix,
        };
        let max_attempts = self.policy.max_attempts.max(1);
        let mut last_error = ParseError::NoObjectFound;
        let mut raw_response = String::new();

        for attempt in 1..=max_attempts {
            let user = if attempt == 1 {
                bundle.user.clone()
            } else {
                format!("{}\n\n{suffix}", bundle.user)
            };
            let request = self.chat.request(&bundle.system, &user);
            raw_response = llm.complete(&request).await?;

            let mut result = ConversionResult {
                persona_id: persona.id.clone(),
                strategy,
                record: None,
                description: None,
                attempts: attempt,
                raw_response: raw_response.clone(),
            };
            let parsed = match strategy {
                Strategy::Closed => parse_closed_response(&raw_response, &self.schema).map(|mut r| {
                    r.persona_id = persona.id.clone();
                    result.record = Some(r);
                }),
                Strategy::Open => parse_open_response(&raw_response).map(|d| result.description = Some(d)),
            };
            match parsed {
                Ok(()) => return Ok(result),
                Err(e) => {
                    tracing::debug!(persona = %persona.id, attempt, error = %e, "unparsable answer");
                    last_error = e;
                }
            }
        }
        Err(ConversionError::ConversionFailed {
            attempts: max_attempts,
            last_error,
            raw_response,
        })
    }
}

/// Free-function form of [`Converter::convert`].
pub async fn convert(
    persona: &PersonaDescription,
    strategy: Strategy,
    llm: &dyn ChatClient,
    policy: &RetryPolicy,
    schema: &StyleSchema,
) -> Result<ConversionResult, ConversionError> {
    let mut converter = Converter::new(schema.clone());
    converter.policy = policy.clone();
    converter.convert(persona, strategy, llm).await
}
