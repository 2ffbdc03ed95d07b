use serde_json::{json, Value};

use super::{redact_secrets, ChatProvider, Completion, Conversation, GatewayError, ModelConfig, Role, Usage};

const ANTHROPIC_VERSION: &str = "2023-06-01";

fn agent(config: &ModelConfig) -> ureq::Agent {
    http_agent(config.request_timeout())
}

pub(crate) fn http_agent(timeout: std::time::Duration) -> ureq::Agent {
    ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into()
}

pub(crate) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    headers: &[(&str, String)],
    body: &Value,
) -> Result<Value, GatewayError> {
    let payload = body.to_string();
    log::debug!("POST {url} {}", redact_secrets(&payload));
    let mut req = agent.post(url).header("content-type", "application/json");
    for (name, value) in headers {
        req = req.header(*name, value.as_str());
    }
    let mut resp = req.send(payload.as_str()).map_err(|e| GatewayError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(|e| GatewayError::Transport(e.to_string()))?;
    log::debug!("HTTP {status} {}", redact_secrets(&text));
    match status {
        200..=299 => serde_json::from_str(&text).map_err(|e| GatewayError::Malformed(e.to_string())),
        401 | 403 => Err(GatewayError::Auth { status }),
        _ => Err(GatewayError::Provider { status, message: error_message(&text) }),
    }
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message").or_else(|| v.get("message")).and_then(Value::as_str).map(str::to_owned)
        })
        .unwrap_or_else(|| body.chars().take(500).collect())
}

fn token_field(v: &Value, pointer: &str) -> Result<u64, GatewayError> {
    v.pointer(pointer).and_then(Value::as_u64).ok_or_else(|| GatewayError::Malformed(format!("missing {pointer}")))
}

/// `/v1/chat/completions`-style endpoint with bearer authentication.
pub struct OpenAiProvider {
    agent: ureq::Agent,
}

impl OpenAiProvider {
    pub fn new(config: &ModelConfig) -> Self {
        OpenAiProvider { agent: agent(config) }
    }

    pub fn request_body(config: &ModelConfig, conv: &Conversation) -> Value {
        let messages: Vec<Value> =
            conv.messages.iter().map(|m| json!({ "role": m.role.as_str(), "content": m.text })).collect();
        json!({
            "model": config.model_id,
            "messages": messages,
            "temperature": config.temperature,
            "top_p": config.top_p,
            "max_tokens": config.max_output_tokens,
        })
    }

    pub fn parse_response(v: &Value) -> Result<Completion, GatewayError> {
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))?
            .to_owned();
        let usage = Usage::new(token_field(v, "/usage/prompt_tokens")?, token_field(v, "/usage/completion_tokens")?);
        Ok(Completion { text, usage })
    }
}

impl ChatProvider for OpenAiProvider {
    fn name(&self) -> &str {
        "openai_style"
    }

    fn complete_once(&self, config: &ModelConfig, conv: &Conversation) -> Result<Completion, GatewayError> {
        let mut headers = Vec::new();
        if let Some(key) = config.resolve_credential()? {
            headers.push(("authorization", format!("Bearer {key}")));
        }
        let body = Self::request_body(config, conv);
        let v = post_json(&self.agent, &config.endpoint, &headers, &body)?;
        Self::parse_response(&v)
    }
}

/// `/v1/messages`-style endpoint: system text travels outside the message list.
pub struct AnthropicProvider {
    agent: ureq::Agent,
}

impl AnthropicProvider {
    pub fn new(config: &ModelConfig) -> Self {
        AnthropicProvider { agent: agent(config) }
    }

    pub fn request_body(config: &ModelConfig, conv: &Conversation) -> Value {
        let messages: Vec<Value> = conv
            .messages
            .iter()
            .filter(|m| m.role != Role::System)
            .map(|m| json!({ "role": m.role.as_str(), "content": m.text }))
            .collect();
        let mut body = json!({
            "model": config.model_id,
            "messages": messages,
            "max_tokens": config.max_output_tokens,
            "temperature": config.temperature,
            "top_p": config.top_p,
        });
        if let Some(system) = conv.system_text() {
            body["system"] = Value::String(system);
        }
        body
    }

    pub fn parse_response(v: &Value) -> Result<Completion, GatewayError> {
        let blocks = v
            .get("content")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Malformed("missing content array".into()))?;
        let text: String = blocks
            .iter()
            .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
            .filter_map(|b| b.get("text").and_then(Value::as_str))
            .collect();
        let usage = Usage::new(token_field(v, "/usage/input_tokens")?, token_field(v, "/usage/output_tokens")?);
        Ok(Completion { text, usage })
    }
}

impl ChatProvider for AnthropicProvider {
    fn name(&self) -> &str {
        "anthropic_style"
    }

    fn complete_once(&self, config: &ModelConfig, conv: &Conversation) -> Result<Completion, GatewayError> {
        let mut headers = vec![("anthropic-version", ANTHROPIC_VERSION.to_owned())];
        if let Some(key) = config.resolve_credential()? {
            headers.push(("x-api-key", key));
        }
        let body = Self::request_body(config, conv);
        let v = post_json(&self.agent, &config.endpoint, &headers, &body)?;
        Self::parse_response(&v)
    }
}
