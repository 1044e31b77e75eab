//! Prompt templates.
//!
//! Templates are plain text with `{name}` placeholders. The defaults are
//! compiled in; a directory containing any of the files named in
//! [`TEMPLATE_NAMES`] (with a `.txt` extension) overrides them one by one.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use sha2::{Digest, Sha256};

pub const TEMPLATE_NAMES: [&str; 8] = [
    "closed_system",
    "closed_user",
    "open_system",
    "open_user",
    "paraphrase_system",
    "paraphrase_user",
    "judge_system",
    "judge_user",
];

const DEFAULTS: [&str; 8] = [
    include_str!("../prompts/closed_system.txt"),
    include_str!("../prompts/closed_user.txt"),
    include_str!("../prompts/open_system.txt"),
    include_str!("../prompts/open_user.txt"),
    include_str!("../prompts/paraphrase_system.txt"),
    include_str!("../prompts/paraphrase_user.txt"),
    include_str!("../prompts/judge_system.txt"),
    include_str!("../prompts/judge_user.txt"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    templates: BTreeMap<&'static str, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            templates: TEMPLATE_NAMES
                .iter()
                .zip(DEFAULTS)
                .map(|(name, text)| (*name, text.to_string()))
                .collect(),
        }
    }
}

impl PromptTemplates {
    /// Defaults, overridden by `<dir>/<name>.txt` where present.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        if !dir.is_dir() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("prompt directory {} does not exist", dir.display()),
            ));
        }
        let mut templates = Self::default();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                templates.templates.insert(name, std::fs::read_to_string(path)?);
            }
        }
        Ok(templates)
    }

    pub fn get(&self, name: &str) -> &str {
        self.templates
            .get(name)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("unknown template `{name}`"))
    }

    /// Fills `{name}` placeholders in a single pass, so substituted text is
    /// never re-expanded. Unknown placeholders are left untouched.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> String {
        static PLACEHOLDER: OnceLock<Regex> = OnceLock::new();
        let re = PLACEHOLDER.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").unwrap());
        re.replace_all(self.get(name), |caps: &regex::Captures<'_>| {
            vars.iter()
                .find(|(k, _)| *k == &caps[1])
                .map(|(_, v)| v.to_string())
                .unwrap_or_else(|| caps[0].to_string())
        })
        .trim_end()
        .to_string()
    }

    /// SHA-256 of every template, for run manifests.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.templates
            .iter()
            .map(|(k, v)| (k.to_string(), hex::encode(Sha256::digest(v.as_bytes()))))
            .collect()
    }
}
