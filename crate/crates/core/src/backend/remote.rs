//! OpenAI-compatible chat-completions client with first-token logprob
//! readout.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::backend::{ChatBackend, ChatRequest, ChatResponse};
use crate::error::{Error, Result};

const MAX_ATTEMPTS: u32 = 3;
const BASE_BACKOFF_MS: u64 = 250;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL of the endpoint, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    content: Option<Vec<WireTokenLogprob>>,
}

#[derive(Deserialize)]
struct WireTokenLogprob {
    top_logprobs: Vec<WireTopLogprob>,
}

#[derive(Deserialize)]
struct WireTopLogprob {
    token: String,
    logprob: f64,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Transport { attempts: 0, message: e.to_string() })?;
        Ok(RemoteBackend { config, client })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn wire_request(&self, request: &ChatRequest) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if request.want_label_logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(request.top_logprobs_k);
        }
        body
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<ChatResponse> {
        let mut builder = self.client.post(self.url()).json(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| Error::Transport { attempts: 1, message: e.to_string() })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Error::Transport { attempts: 1, message: e.to_string() })?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Error::Transport {
                attempts: 1,
                message: format!("status {status}: {text}"),
            });
        }
        if !status.is_success() {
            return Err(Error::Protocol(format!("status {status}: {text}")));
        }
        parse_wire_response(&text)
    }
}

pub(crate) fn parse_wire_response(raw: &str) -> Result<ChatResponse> {
    let wire: WireResponse =
        serde_json::from_str(raw).map_err(|e| Error::Protocol(format!("malformed reply: {e}")))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::Protocol("reply has no choices".into()))?;
    let text = choice.message.content.unwrap_or_default();
    let first_token_logprobs = choice.logprobs.and_then(|lp| lp.content).and_then(|tokens| {
        tokens.into_iter().next().map(|first| {
            let mut map = BTreeMap::new();
            for top in first.top_logprobs {
                // Keep the best logprob when the endpoint repeats a token.
                let entry = map.entry(top.token).or_insert(f64::NEG_INFINITY);
                if top.logprob > *entry {
                    *entry = top.logprob;
                }
            }
            map
        })
    });
    Ok(ChatResponse { text, first_token_logprobs })
}

impl ChatBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}:{}", self.config.endpoint, self.config.model)
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let body = self.wire_request(request);
        let mut last = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            match self.send_once(&body) {
                Ok(resp) => {
                    if request.want_label_logprobs && resp.first_token_logprobs.is_none() {
                        return Err(Error::Capability(
                            "logprobs requested but absent in reply".into(),
                        ));
                    }
                    return Ok(resp);
                }
                Err(Error::Transport { message, .. }) => {
                    last = message;
                    if attempt < MAX_ATTEMPTS {
                        std::thread::sleep(Duration::from_millis(
                            BASE_BACKOFF_MS << (attempt - 1),
                        ));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(Error::Transport { attempts: MAX_ATTEMPTS, message: last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_logprob_reply() {
        let raw = r#"{
          "choices": [{
            "message": {"role": "assistant", "content": "A"},
            "logprobs": {"content": [{
              "token": "A", "logprob": -0.1,
              "top_logprobs": [
                {"token": "A", "logprob": -0.1},
                {"token": "B", "logprob": -2.4}
              ]
            }]}
          }]
        }"#;
        let resp = parse_wire_response(raw).unwrap();
        assert_eq!(resp.text, "A");
        let lp = resp.first_token_logprobs.unwrap();
        assert_eq!(lp["A"], -0.1);
        assert_eq!(lp["B"], -2.4);
    }

    #[test]
    fn missing_choices_is_protocol_error() {
        assert!(matches!(
            parse_wire_response(r#"{"choices": []}"#),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn garbage_is_protocol_error() {
        assert!(matches!(parse_wire_response("not json"), Err(Error::Protocol(_))));
    }
}
