use serde::{Deserialize, Serialize};

use super::RaterError;
use crate::codebook::VariableId;
use crate::corpus::Post;

pub const DEFAULT_PROMPT_VERSION: &str = "v1";
pub const DEFAULT_MODEL: &str = "gpt-4-0314";
pub const ALT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_TEMPERATURE: f64 = 0.7;

const V1_TEMPLATES: [&str; 8] = [
    include_str!("../../templates/v1/v1.txt"),
    include_str!("../../templates/v1/v2.txt"),
    include_str!("../../templates/v1/v3.txt"),
    include_str!("../../templates/v1/v4.txt"),
    include_str!("../../templates/v1/v5.txt"),
    include_str!("../../templates/v1/v6.txt"),
    include_str!("../../templates/v1/v7.txt"),
    include_str!("../../templates/v1/v8.txt"),
];

const VERSIONS: [(&str, &[&str; 8]); 1] = [("v1", &V1_TEMPLATES)];

pub fn available_versions() -> Vec<&'static str> {
    VERSIONS.iter().map(|(v, _)| *v).collect()
}

/// A stored system prompt for one variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub variable: VariableId,
    pub system_text: &'static str,
    pub prompt_version: &'static str,
}

pub fn template(variable: VariableId, version: &str) -> Result<PromptTemplate, RaterError> {
    VERSIONS
        .iter()
        .find(|(v, _)| *v == version)
        .map(|(v, texts)| PromptTemplate {
            variable,
            system_text: texts[variable.index()],
            prompt_version: v,
        })
        .ok_or_else(|| RaterError::UnknownVersion {
            version: version.to_string(),
            available: available_versions().into_iter().map(String::from).collect(),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(rename = "model")]
    pub model_id: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub model_id: String,
    pub temperature: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL.to_string(),
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

impl ModelSettings {
    pub fn validate(&self) -> Result<(), RaterError> {
        if (0.0..=2.0).contains(&self.temperature) {
            Ok(())
        } else {
            Err(RaterError::Temperature(self.temperature))
        }
    }
}

/// System message = the variable's stored template, user message = the post
/// text, unmodified.
pub fn build_prompt(
    variable: VariableId,
    post: &Post,
    version: &str,
    model: &ModelSettings,
) -> Result<ChatRequest, RaterError> {
    model.validate()?;
    let template = template(variable, version)?;
    Ok(ChatRequest {
        model_id: model.model_id.clone(),
        temperature: model.temperature,
        messages: vec![
            ChatMessage {
                role: Role::System,
                content: template.system_text.to_string(),
            },
            ChatMessage {
                role: Role::User,
                content: post.text.clone(),
            },
        ],
    })
}
