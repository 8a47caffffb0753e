//! Deterministic stand-ins for test and offline runs.

use std::collections::BTreeMap;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::backend::{ChatBackend, ChatRequest, ChatResponse};
use crate::error::{Error, Result};

/// Replays a fixed list of responses in call order.
pub struct ScriptedBackend {
    name: String,
    responses: Vec<ChatResponse>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, responses: Vec<ChatResponse>) -> Self {
        ScriptedBackend { name: name.into(), responses, cursor: Mutex::new(0) }
    }

    pub fn texts(name: impl Into<String>, texts: &[&str]) -> Self {
        Self::new(
            name,
            texts
                .iter()
                .map(|t| ChatResponse { text: t.to_string(), first_token_logprobs: None })
                .collect(),
        )
    }

    pub fn with_logprobs(name: impl Into<String>, logprobs: BTreeMap<String, f64>) -> Self {
        Self::new(
            name,
            vec![ChatResponse {
                text: String::new(),
                first_token_logprobs: Some(logprobs),
            }],
        )
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> String {
        format!("scripted:{}", self.name)
    }

    fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse> {
        let mut cursor = self.cursor.lock().unwrap();
        if self.responses.is_empty() {
            return Err(Error::Protocol("scripted backend has no responses".into()));
        }
        let resp = self.responses[*cursor % self.responses.len()].clone();
        *cursor += 1;
        Ok(resp)
    }
}

/// A paraphraser stub: answers the canonical paraphrase prompt with the
/// input instruction plus a deterministic variant suffix derived from the
/// request's sample index. Distinct sample indices yield distinct texts, so
/// a hash-keyed simulated judge sees them as instructions with fresh
/// biases.
pub struct EchoParaphraser;

fn extract_input(prompt: &str) -> Option<&str> {
    let start = prompt.find("Input: ")? + "Input: ".len();
    let rest = &prompt[start..];
    let end = rest.find("\n\nOutput:")?;
    Some(&rest[..end])
}

impl ChatBackend for EchoParaphraser {
    fn id(&self) -> String {
        "stub:echo-paraphraser".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let prompt = request
            .messages
            .last()
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let input = extract_input(prompt).ok_or_else(|| {
            Error::Protocol("echo paraphraser received a non-paraphrase prompt".into())
        })?;
        // Tag derived from the input too, so the same index on a different
        // incumbent still produces a fresh text.
        let mut hasher = Sha256::new();
        hasher.update(input.as_bytes());
        hasher.update(request.sample_index.to_le_bytes());
        let tag = format!("{:x}", hasher.finalize());
        Ok(ChatResponse {
            text: format!("{input} (variant {})", &tag[..8]),
            first_token_logprobs: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_cycles_in_order() {
        let backend = ScriptedBackend::texts("t", &["one", "two"]);
        let req = ChatRequest::single_user("x");
        assert_eq!(backend.complete(&req).unwrap().text, "one");
        assert_eq!(backend.complete(&req).unwrap().text, "two");
        assert_eq!(backend.complete(&req).unwrap().text, "one");
    }

    #[test]
    fn echo_paraphraser_varies_by_sample_index() {
        let backend = EchoParaphraser;
        let prompt = "Paraphrase the following instruction for a pairwise comparison task. Do not change the keyword \"coherence\". Be diverse and creative in paraphrasing. Return the instruction only.\n\nInput: Judge the coherence of both.\n\nOutput:";
        let mut req = ChatRequest::single_user(prompt);
        req.sample_index = 0;
        let a = backend.complete(&req).unwrap().text;
        req.sample_index = 1;
        let b = backend.complete(&req).unwrap().text;
        assert_ne!(a, b);
        assert!(a.starts_with("Judge the coherence of both. (variant "));
        assert!(a.contains("coherence"));
    }
}
