//! Chat-completion transports: an HTTP client for the common
//! `/chat/completions` wire format and a deterministic rule-driven stub.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::template::Bindings;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
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

/// An image attached to the user message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePayload {
    pub mime: String,
    pub bytes: Vec<u8>,
}

impl ImagePayload {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::ImagePayload {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mime = match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("jpg") | Some("jpeg") => "image/jpeg",
            Some("gif") => "image/gif",
            Some("webp") => "image/webp",
            _ => "image/png",
        };
        Ok(Self {
            mime: mime.to_string(),
            bytes,
        })
    }

    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.mime,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }
}

/// Context that travels with a request but is not sent over the wire. The
/// stub backend matches on it.
#[derive(Debug, Clone, Default)]
pub struct RequestMeta {
    pub annotator_id: String,
    pub template_id: String,
    pub bindings: Bindings,
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub images: Vec<ImagePayload>,
    pub temperature: f64,
    pub meta: RequestMeta,
}

impl ChatRequest {
    /// JSON body in the chat-completion format. Images ride on the last
    /// user message as `image_url` content parts.
    pub fn to_wire(&self) -> Value {
        let last_user = self.messages.iter().rposition(|m| m.role == Role::User);
        let messages: Vec<Value> = self
            .messages
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if Some(i) == last_user && !self.images.is_empty() {
                    let mut parts = vec![json!({"type": "text", "text": m.content})];
                    parts.extend(self.images.iter().map(|img| {
                        json!({"type": "image_url", "image_url": {"url": img.data_url()}})
                    }));
                    json!({"role": m.role, "content": parts})
                } else {
                    json!({"role": m.role, "content": m.content})
                }
            })
            .collect();
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        })
    }

    pub fn user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: &str, api_key: Option<String>, timeout_secs: u64) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(timeout_secs)))
            .http_status_as_error(false)
            .build();
        Self {
            url: url.to_string(),
            api_key,
            agent: config.into(),
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req
            .send_json(request.to_wire())
            .map_err(|e| TransportError(format!("POST {}: {e}", self.url)))?;
        let status = response.status();
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| TransportError(format!("HTTP {status}: unreadable body: {e}")))?;
        if !status.is_success() {
            return Err(TransportError(format!("HTTP {status}: {body}")));
        }
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError(format!("response has no message content: {body}")))
    }
}

/// One stub rule. Every condition that is set must hold; the first matching
/// rule answers. `contains` is checked against the `slot` binding when a slot
/// is named, otherwise against the rendered user prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubRule {
    #[serde(default)]
    pub annotator: Option<String>,
    #[serde(default)]
    pub template: Option<String>,
    #[serde(default)]
    pub slot: Option<String>,
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub with_images: Option<bool>,
    #[serde(default)]
    pub response: Option<String>,
    /// Simulates a transport failure.
    #[serde(default)]
    pub fail: bool,
}

impl StubRule {
    fn matches(&self, request: &ChatRequest) -> bool {
        let meta = &request.meta;
        if self.annotator.as_ref().is_some_and(|a| a != &meta.annotator_id) {
            return false;
        }
        if self.template.as_ref().is_some_and(|t| t != &meta.template_id) {
            return false;
        }
        if self.with_images.is_some_and(|w| w != !request.images.is_empty()) {
            return false;
        }
        if let Some(needle) = &self.contains {
            let haystack = match &self.slot {
                Some(slot) => meta.bindings.get(slot).map_or("", String::as_str),
                None => request.user_text(),
            };
            if !haystack.contains(needle.as_str()) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct StubRules {
    #[serde(default, rename = "rule")]
    pub rules: Vec<StubRule>,
}

/// Deterministic offline backend answering from a rule list.
#[derive(Debug, Default)]
pub struct StubBackend {
    rules: Vec<StubRule>,
    calls: AtomicUsize,
}

impl StubBackend {
    pub fn new(rules: Vec<StubRule>) -> Self {
        Self {
            rules,
            calls: AtomicUsize::new(0),
        }
    }

    /// Reads `[[rule]]` tables from a TOML file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: StubRules = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            field: "rule".into(),
            message: e.to_string(),
        })?;
        Ok(Self::new(parsed.rules))
    }

    /// Number of requests that reached this backend.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for StubBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let rule = self
            .rules
            .iter()
            .find(|r| r.matches(request))
            .ok_or_else(|| {
                TransportError(format!(
                    "stub: no rule for annotator {} / template {}",
                    request.meta.annotator_id, request.meta.template_id
                ))
            })?;
        if rule.fail {
            return Err(TransportError("stub: simulated transport failure".into()));
        }
        Ok(rule.response.clone().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(template: &str, bindings: &[(&str, &str)], images: usize) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: "prompt body".into(),
            }],
            images: (0..images)
                .map(|_| ImagePayload {
                    mime: "image/png".into(),
                    bytes: vec![1, 2, 3],
                })
                .collect(),
            temperature: 0.0,
            meta: RequestMeta {
                annotator_id: "a1".into(),
                template_id: template.into(),
                bindings: bindings
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
            },
        }
    }

    #[test]
    fn wire_format_carries_images() {
        let wire = request("t", &[], 1).to_wire();
        assert_eq!(wire["model"], "m");
        assert_eq!(wire["temperature"], 0.0);
        let parts = wire["messages"][0]["content"].as_array().unwrap();
        assert_eq!(parts[0]["type"], "text");
        assert_eq!(parts[1]["type"], "image_url");
        assert_eq!(parts[1]["image_url"]["url"], "data:image/png;base64,AQID");

        let plain = request("t", &[], 0).to_wire();
        assert_eq!(plain["messages"][0]["content"], "prompt body");
    }

    #[test]
    fn stub_rules_match_in_order() {
        let stub = StubBackend::new(vec![
            StubRule {
                template: Some("own".into()),
                slot: Some("SENTENCE".into()),
                contains: Some("We show".into()),
                response: Some("<Label>original_statement</Label>".into()),
                ..Default::default()
            },
            StubRule {
                template: Some("own".into()),
                response: Some("<Label>not_original_statement</Label>".into()),
                ..Default::default()
            },
            StubRule {
                template: Some("down".into()),
                fail: true,
                ..Default::default()
            },
        ]);
        let hit = stub.complete(&request("own", &[("SENTENCE", "We show X.")], 0));
        assert_eq!(hit.unwrap(), "<Label>original_statement</Label>");
        let miss = stub.complete(&request("own", &[("SENTENCE", "Prior work did Y.")], 0));
        assert_eq!(miss.unwrap(), "<Label>not_original_statement</Label>");
        assert!(stub.complete(&request("down", &[], 0)).is_err());
        assert!(stub.complete(&request("unknown", &[], 0)).is_err());
        assert_eq!(stub.calls(), 4);
    }

    #[test]
    fn stub_rules_from_toml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stub.toml");
        fs::write(
            &path,
            "[[rule]]\ntemplate = \"x\"\nwith_images = true\nresponse = \"img\"\n\n[[rule]]\nresponse = \"plain\"\n",
        )
        .unwrap();
        let stub = StubBackend::from_file(&path).unwrap();
        assert_eq!(stub.complete(&request("x", &[], 1)).unwrap(), "img");
        assert_eq!(stub.complete(&request("x", &[], 0)).unwrap(), "plain");
    }
}
