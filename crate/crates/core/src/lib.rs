//! Persona-to-voice-attribute toolkit.
//!
//! Converts free-text persona descriptions into voice-style specifications
//! for prompt-based text-to-speech, evaluates the synthesized speech and
//! audits the conversion step for demographic skew.

pub mod audit;
pub mod clients;
pub mod convert;
pub mod corpus;
pub mod eval;
pub mod pipeline;
pub mod prompts;
pub mod render;
pub mod schema;

pub use convert::{ConversionResult, Converter, PersonaDescription, Strategy};
pub use render::{DescriptionOrigin, StyleDescription};
pub use schema::{default_schema, StyleSchema, VoiceAttributeRecord};
