use std::collections::VecDeque;
use std::sync::Mutex;

use super::{ChatProvider, Completion, Conversation, GatewayError, ModelConfig, Usage};

/// Token count used for mock usage accounting: whitespace-separated words.
pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Serves a fixed list of responses in order, one per call.
///
/// Usage is computed with [`whitespace_tokens`]: the input count covers
/// every message of the conversation, the output count the reply.
pub struct MockProvider {
    script: Mutex<VecDeque<String>>,
    served: Mutex<usize>,
}

impl MockProvider {
    pub fn new<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MockProvider { script: Mutex::new(script.into_iter().map(Into::into).collect()), served: Mutex::new(0) }
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }
}

impl ChatProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete_once(&self, _config: &ModelConfig, conv: &Conversation) -> Result<Completion, GatewayError> {
        let mut served = self.served.lock().unwrap();
        let text = self.script.lock().unwrap().pop_front().ok_or(GatewayError::ScriptExhausted(*served))?;
        *served += 1;
        let input_tokens = conv.messages.iter().map(|m| whitespace_tokens(&m.text)).sum();
        let usage = Usage::new(input_tokens, whitespace_tokens(&text));
        Ok(Completion { text, usage })
    }
}
