//! Provider-agnostic chat completion.
//!
//! Two HTTP dialects (`openai_style`, `anthropic_style`) and a scripted mock
//! sit behind [`ChatProvider`]. [`complete`] adds retry with exponential
//! backoff on top of any provider and never touches the caller's
//! [`Conversation`].

pub(crate) mod http;
mod mock;

use std::fmt;
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{AnthropicProvider, OpenAiProvider};
pub use mock::{whitespace_tokens, MockProvider};

pub const DEFAULT_TEMPERATURE: f64 = 0.9;
pub const DEFAULT_TOP_P: f64 = 0.85;
/// Output cap used when a model entry does not set one.
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 2048;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid conversation: {0}")]
    Conversation(String),
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
    #[error("authentication rejected by provider (HTTP {status})")]
    Auth { status: u16 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider error (HTTP {status}): {message}")]
    Provider { status: u16, message: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("mock script exhausted after {0} responses")]
    ScriptExhausted(usize),
}

impl GatewayError {
    /// Network failures, rate limits and server-side errors are worth
    /// another attempt. Everything else surfaces immediately.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Provider { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    OpenaiStyle,
    AnthropicStyle,
    Mock,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::OpenaiStyle => "openai_style",
            ProviderKind::AnthropicStyle => "anthropic_style",
            ProviderKind::Mock => "mock",
        })
    }
}

/// One model entry of an experiment.
///
/// `credential_ref` names an environment variable; the key itself is only
/// read at request time and never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    pub provider_kind: ProviderKind,
    #[serde(default)]
    /// Full request URL, e.g. `https://api.openai.com/v1/chat/completions`.
    pub endpoint: String,
    #[serde(default)]
    pub credential_ref: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_ms", rename = "request_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Base delay of the exponential backoff between retries.
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    /// Responses served in order by the mock provider.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mock_script: Vec<String>,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_top_p() -> f64 {
    DEFAULT_TOP_P
}
fn default_max_output_tokens() -> u32 {
    DEFAULT_MAX_OUTPUT_TOKENS
}
fn default_timeout_ms() -> u64 {
    120_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}

impl ModelConfig {
    pub fn new(model_id: impl Into<String>, provider_kind: ProviderKind) -> Self {
        ModelConfig {
            model_id: model_id.into(),
            provider_kind,
            endpoint: String::new(),
            credential_ref: None,
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            request_timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            retry_backoff_ms: default_backoff_ms(),
            mock_script: Vec::new(),
        }
    }

    pub fn mock(model_id: impl Into<String>, script: Vec<String>) -> Self {
        ModelConfig { mock_script: script, retry_backoff_ms: 0, ..ModelConfig::new(model_id, ProviderKind::Mock) }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model_id.trim().is_empty() {
            return Err(GatewayError::Config("model_id is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::Config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::Config(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::Config("max_output_tokens must be positive".into()));
        }
        if self.provider_kind != ProviderKind::Mock {
            if self.endpoint.is_empty() {
                return Err(GatewayError::Config(format!("model `{}` has no endpoint", self.model_id)));
            }
            match &self.credential_ref {
                Some(name) if looks_like_secret(name) => {
                    return Err(GatewayError::Config(format!(
                        "credential_ref for `{}` must name an environment variable, not hold a key",
                        self.model_id
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub(crate) fn resolve_credential(&self) -> Result<Option<String>, GatewayError> {
        match &self.credential_ref {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| GatewayError::MissingCredential(var.clone())),
        }
    }
}

/// Environment variable names are upper-case identifiers; anything else
/// (lower case, dashes, very long) is most likely a pasted key.
fn looks_like_secret(name: &str) -> bool {
    name.is_empty()
        || name.len() > 64
        || !name.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub messages: Vec<Message>,
}

impl Conversation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, role: Role, text: impl Into<String>) {
        self.messages.push(Message { role, text: text.into() });
    }

    pub fn with(mut self, role: Role, text: impl Into<String>) -> Self {
        self.push(role, text);
        self
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn system_text(&self) -> Option<String> {
        let parts: Vec<&str> =
            self.messages.iter().filter(|m| m.role == Role::System).map(|m| m.text.as_str()).collect();
        (!parts.is_empty()).then(|| parts.join("\n\n"))
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.text.as_str())
    }

    /// Leading system messages, then strictly alternating user/assistant
    /// turns starting with a user turn.
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::Conversation("no messages".into()));
        }
        let mut rest = self.messages.iter().skip_while(|m| m.role == Role::System).peekable();
        if rest.peek().is_none() {
            return Err(GatewayError::Conversation("no user message".into()));
        }
        for (i, msg) in rest.enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if msg.role != expected {
                return Err(GatewayError::Conversation(format!(
                    "turn {} is {} but {} was expected",
                    i + 1,
                    msg.role.as_str(),
                    expected.as_str()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Usage { input_tokens, output_tokens }
    }
}

impl std::ops::Add for Usage {
    type Output = Usage;
    fn add(self, rhs: Usage) -> Usage {
        Usage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Usage {
    fn sum<I: Iterator<Item = Usage>>(iter: I) -> Usage {
        iter.fold(Usage::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

/// A single chat-completion attempt. Retries live in [`complete`].
pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete_once(&self, config: &ModelConfig, conv: &Conversation) -> Result<Completion, GatewayError>;
}

/// Build the provider named by `config.provider_kind`.
pub fn provider_for(config: &ModelConfig) -> Result<Box<dyn ChatProvider>, GatewayError> {
    config.validate()?;
    Ok(match config.provider_kind {
        ProviderKind::OpenaiStyle => Box::new(OpenAiProvider::new(config)),
        ProviderKind::AnthropicStyle => Box::new(AnthropicProvider::new(config)),
        ProviderKind::Mock => Box::new(MockProvider::new(config.mock_script.clone())),
    })
}

/// Run one completion, retrying transient failures up to
/// `config.max_retries` extra times with exponential backoff.
pub fn complete(
    provider: &dyn ChatProvider,
    config: &ModelConfig,
    conv: &Conversation,
) -> Result<Completion, GatewayError> {
    conv.validate()?;
    let mut attempt = 0u32;
    loop {
        match provider.complete_once(config, conv) {
            Ok(c) => return Ok(c),
            Err(e) if e.is_retryable() && attempt < config.max_retries => {
                let delay = config.retry_backoff_ms.saturating_mul(1u64 << attempt.min(16));
                log::warn!("{} attempt {} failed ({e}); retrying in {delay} ms", provider.name(), attempt + 1);
                if delay > 0 {
                    std::thread::sleep(Duration::from_millis(delay));
                }
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

static SECRET_PATTERN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)((?:bearer\s+|x-api-key"?\s*[:=]\s*"?|api[_-]?key"?\s*[:=]\s*"?))[A-Za-z0-9_\-\.]{8,}"#).unwrap()
});

/// Mask anything that looks like a bearer token or API key in a log line.
pub fn redact_secrets(text: &str) -> String {
    SECRET_PATTERN.replace_all(text, "${1}[REDACTED]").into_owned()
}
