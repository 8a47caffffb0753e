//! Pluggable text-model backends plus a deterministic response cache.

mod cache;
mod remote;
mod simulated;
mod stub;

pub use cache::CachedBackend;
pub use remote::{RemoteBackend, RemoteConfig};
pub use simulated::{
    simulated_agreement_oracle, DeltaModel, SharpnessModel, SimulatedBackend,
    SimulatedEvaluatorParams,
};
pub use stub::{EchoParaphraser, ScriptedBackend};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub want_label_logprobs: bool,
    pub top_logprobs_k: u32,
    /// Distinguishes repeated sampling draws of the same prompt at
    /// temperature > 0; part of the cache key.
    pub sample_index: u32,
}

impl ChatRequest {
    pub fn single_user(content: impl Into<String>) -> Self {
        ChatRequest {
            messages: vec![ChatMessage::user(content)],
            temperature: 0.0,
            max_tokens: 8,
            want_label_logprobs: false,
            top_logprobs_k: 0,
            sample_index: 0,
        }
    }

    pub fn label_query(context: impl Into<String>, top_k: u32) -> Self {
        ChatRequest {
            messages: vec![ChatMessage::user(context)],
            temperature: 0.0,
            max_tokens: 1,
            want_label_logprobs: true,
            top_logprobs_k: top_k,
            sample_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    /// Top-k log-probabilities of the first generated token, when requested
    /// and supported. Keys are raw token strings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_token_logprobs: Option<std::collections::BTreeMap<String, f64>>,
}

/// Content-addressed cache key: backend id plus digest of the canonical
/// serialized request. Equal requests hash equal; any field change changes
/// the digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(pub String);

pub fn cache_key(backend_id: &str, request: &ChatRequest) -> CacheKey {
    let canonical = serde_json::to_string(request).expect("request serializes");
    let mut hasher = Sha256::new();
    hasher.update(backend_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(canonical.as_bytes());
    CacheKey(format!("{:x}", hasher.finalize()))
}

pub trait ChatBackend: Send + Sync {
    /// Stable identifier, part of every cache key.
    fn id(&self) -> String;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        (**self).complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_requests_equal_keys() {
        let a = ChatRequest::label_query("ctx", 5);
        let b = ChatRequest::label_query("ctx", 5);
        assert_eq!(cache_key("x", &a), cache_key("x", &b));
    }

    #[test]
    fn any_field_change_changes_key() {
        let base = ChatRequest::label_query("ctx", 5);
        let mut variants = Vec::new();
        let mut v = base.clone();
        v.messages[0].content.push('!');
        variants.push(v);
        let mut v = base.clone();
        v.temperature = 0.9;
        variants.push(v);
        let mut v = base.clone();
        v.max_tokens += 1;
        variants.push(v);
        let mut v = base.clone();
        v.top_logprobs_k += 1;
        variants.push(v);
        let mut v = base.clone();
        v.sample_index += 1;
        variants.push(v);
        let key = cache_key("x", &base);
        for v in variants {
            assert_ne!(key, cache_key("x", &v));
        }
        assert_ne!(key, cache_key("y", &base));
    }
}
