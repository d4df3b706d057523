//! Chat-completion access shared by the agents, the baselines and the judge.
//!
//! Every provider implements [`ChatProvider`]. The [`Gateway`] wraps one
//! with retries, a concurrency bound and a [`Transcript`]. Responses are
//! plain text; structured parts are pulled out with [`extract_tag`].

mod gateway;
mod offline;
mod providers;
mod tags;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use gateway::{Gateway, RetryPolicy, Transcript};
pub use offline::OfflineLlm;
pub use providers::{FnProvider, HttpProvider, RecordingProvider, ReplayProvider, ScriptedProvider};
pub use tags::{extract_tag, parse_judgment, strip_code_fence, TagError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Part {
    Text { text: String },
    Image {
        media_type: String,
        #[serde(with = "b64")]
        data: Vec<u8>,
    },
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(data: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(data))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            parts: vec![Part::Text { text: text.into() }],
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            parts: vec![Part::Text { text: text.into() }],
        }
    }

    pub fn with_image(mut self, media_type: impl Into<String>, data: Vec<u8>) -> Self {
        self.parts.push(Part::Image {
            media_type: media_type.into(),
            data,
        });
        self
    }

    /// Concatenated text parts.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text { text } => Some(text.as_str()),
                Part::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        CompletionRequest {
            model: model.into(),
            messages,
            temperature: 0.0,
            max_tokens: 4096,
            seed: None,
        }
    }

    /// Single user message.
    pub fn prompt(model: impl Into<String>, text: impl Into<String>) -> Self {
        Self::new(model, vec![ChatMessage::user(text)])
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// Text of the last user message.
    pub fn last_user_text(&self) -> String {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(ChatMessage::text)
            .unwrap_or_default()
    }

    pub fn check(&self) -> Result<(), ProviderError> {
        if self.messages.is_empty() {
            return Err(ProviderError::Fatal("request has no messages".into()));
        }
        for m in &self.messages {
            if m.parts.is_empty() {
                return Err(ProviderError::Fatal("message without parts".into()));
            }
            if m.role != Role::User && m.parts.iter().any(|p| matches!(p, Part::Image { .. })) {
                return Err(ProviderError::Fatal("images are only allowed in user messages".into()));
            }
        }
        if !(self.temperature >= 0.0) {
            return Err(ProviderError::Fatal("temperature must be >= 0".into()));
        }
        Ok(())
    }

    /// Content address used by the record and replay providers.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("requests serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("context length exceeded: {0}")]
    ContextLength(String),
    #[error("provider failure: {0}")]
    Fatal(String),
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("gave up after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("context length exceeded: {0}")]
    ContextLength(String),
    #[error("provider failure: {0}")]
    Fatal(String),
}
