//! LLM annotator panel: prompt rendering, transport with retries, a
//! content-addressed response cache, and response-tag parsing.

mod backend;
mod cache;
pub mod parse;
pub mod template;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use backend::{
    ChatBackend, ChatMessage, ChatRequest, HttpBackend, ImagePayload, RequestMeta, Role,
    StubBackend, StubRule, StubRules, TransportError,
};
pub use cache::{cache_key, request_digest, CacheEntry, ResponseCache};
pub use parse::{parse_label_tag, parse_score_tag, parse_sentence_numbers, ParseFailure};
pub use template::{Bindings, ExpectedTag, PromptTemplate};

use crate::corpus::SentenceId;
use crate::error::{Error, Result};

/// Endpoint URLs with this scheme are served by the offline stub backend.
pub const STUB_SCHEME: &str = "stub:";

/// Substituted when a score response still has no justification after the
/// reformat retry.
pub const MISSING_JUSTIFICATION: &str = "(none)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Vision,
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_timeout_secs() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub annotator_id: String,
    pub endpoint_url: String,
    pub model_name: String,
    pub modality: Modality,
    /// Total transport attempts before giving up.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    /// Environment variable holding the API key. Defaults to
    /// `<ANNOTATOR_ID>_API_KEY`.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl AnnotatorConfig {
    pub fn new(annotator_id: &str, endpoint_url: &str, model_name: &str, modality: Modality) -> Self {
        Self {
            annotator_id: annotator_id.to_string(),
            endpoint_url: endpoint_url.to_string(),
            model_name: model_name.to_string(),
            modality,
            max_retries: default_max_retries(),
            temperature: 0.0,
            api_key_env: None,
            backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn api_key_var(&self) -> String {
        self.api_key_env.clone().unwrap_or_else(|| {
            let id: String = self
                .annotator_id
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
                .collect();
            format!("{id}_API_KEY")
        })
    }
}

/// How a response should be parsed.
#[derive(Debug, Clone, PartialEq)]
pub enum Expect {
    Label { allowed: Vec<String> },
    SentenceNumbers { valid_ids: BTreeSet<SentenceId> },
    Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parsed {
    Label(String),
    SentenceIds(Vec<SentenceId>),
    Score { score: f64, justification: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ParseFailed,
    TransportFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationResult {
    pub annotator_id: String,
    pub template_id: String,
    pub cache_key: String,
    pub raw_text: String,
    pub parsed: Option<Parsed>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AnnotationResult {
    pub fn label(&self) -> Option<&str> {
        match &self.parsed {
            Some(Parsed::Label(l)) => Some(l),
            _ => None,
        }
    }

    pub fn sentence_ids(&self) -> Option<&[SentenceId]> {
        match &self.parsed {
            Some(Parsed::SentenceIds(ids)) => Some(ids),
            _ => None,
        }
    }

    pub fn score(&self) -> Option<(f64, &str)> {
        match &self.parsed {
            Some(Parsed::Score { score, justification }) => Some((*score, justification)),
            _ => None,
        }
    }
}

/// One prompt to send: template, bindings, image files and parse rule.
#[derive(Debug, Clone)]
pub struct AnnotationTask<'a> {
    pub template: &'a PromptTemplate,
    pub bindings: Bindings,
    pub images: Vec<PathBuf>,
    pub expect: Expect,
}

/// Outcome of one transport-level call (after retries, via the cache).
#[derive(Debug, Clone)]
pub struct RawCall {
    pub cache_key: String,
    pub raw_text: Result<String, TransportError>,
    pub from_cache: bool,
}

pub struct Annotator {
    pub config: AnnotatorConfig,
    backend: Arc<dyn ChatBackend>,
    cache: Option<ResponseCache>,
}

impl std::fmt::Debug for Annotator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Annotator")
            .field("config", &self.config)
            .field("cache", &self.cache)
            .finish_non_exhaustive()
    }
}

impl Annotator {
    pub fn new(
        config: AnnotatorConfig,
        backend: Arc<dyn ChatBackend>,
        cache: Option<ResponseCache>,
    ) -> Self {
        Self {
            config,
            backend,
            cache,
        }
    }

    /// Builds the transport from `config.endpoint_url`: `stub:` URLs use
    /// `stub`, anything else the HTTP client with the key from the
    /// annotator's environment variable.
    pub fn from_config(
        config: AnnotatorConfig,
        stub: Option<Arc<StubBackend>>,
        cache: Option<ResponseCache>,
    ) -> Result<Self> {
        let backend: Arc<dyn ChatBackend> = if config.endpoint_url.starts_with(STUB_SCHEME) {
            stub.ok_or_else(|| {
                Error::Config(format!(
                    "annotator {} uses a stub endpoint but no stub responses are configured",
                    config.annotator_id
                ))
            })?
        } else {
            let key = std::env::var(config.api_key_var()).ok();
            Arc::new(HttpBackend::new(&config.endpoint_url, key, config.timeout_secs))
        };
        Ok(Self::new(config, backend, cache))
    }

    pub fn id(&self) -> &str {
        &self.config.annotator_id
    }

    pub fn is_vision(&self) -> bool {
        self.config.modality == Modality::Vision
    }

    fn build_request(&self, prompt: &str, images: &[ImagePayload], meta: RequestMeta) -> ChatRequest {
        ChatRequest {
            model: self.config.model_name.clone(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: prompt.to_string(),
            }],
            images: images.to_vec(),
            temperature: self.config.temperature,
            meta,
        }
    }

    /// Sends one rendered prompt. A cache hit skips the network; on a miss
    /// the response is persisted before returning. Transport errors are
    /// retried with exponential backoff up to `max_retries` attempts.
    pub fn call(&self, prompt: &str, images: &[ImagePayload], meta: RequestMeta) -> RawCall {
        let template_id = meta.template_id.clone();
        let request = self.build_request(prompt, images, meta);
        let key = cache_key(&template_id, &self.config.model_name, &request);

        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return RawCall {
                cache_key: key,
                raw_text: Ok(hit.raw_response),
                from_cache: true,
            };
        }

        let attempts = self.config.max_retries.max(1);
        let mut last_err = TransportError("no attempt made".into());
        for attempt in 0..attempts {
            match self.backend.complete(&request) {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        let entry = CacheEntry {
                            cache_key: key.clone(),
                            request_digest: request_digest(&request),
                            model_name: self.config.model_name.clone(),
                            template_id: template_id.clone(),
                            raw_response: text.clone(),
                        };
                        if let Err(e) = cache.put(&entry) {
                            log::warn!("cache write failed for {key}: {e}");
                        }
                    }
                    return RawCall {
                        cache_key: key,
                        raw_text: Ok(text),
                        from_cache: false,
                    };
                }
                Err(e) => {
                    log::warn!(
                        "{}: attempt {}/{} failed: {e}",
                        self.config.annotator_id,
                        attempt + 1,
                        attempts
                    );
                    last_err = e;
                    if attempt + 1 < attempts && self.config.backoff_ms > 0 {
                        let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(10));
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
        RawCall {
            cache_key: key,
            raw_text: Err(last_err),
            from_cache: false,
        }
    }

    /// Renders, sends and parses one task. A response that fails to parse
    /// (or a score without justification) gets one extra "reformat" call
    /// with a reminder of the expected tag appended.
    ///
    /// Errors only on caller mistakes: unbound placeholders, images sent to
    /// a text-only annotator, or unreadable image files.
    pub fn annotate(&self, task: &AnnotationTask<'_>) -> Result<AnnotationResult> {
        if !task.images.is_empty() && !self.is_vision() {
            return Err(Error::ModalityMismatch {
                annotator_id: self.config.annotator_id.clone(),
                n_images: task.images.len(),
            });
        }
        let prompt = task.template.render(&task.bindings)?;
        let payloads = task
            .images
            .iter()
            .map(|p| ImagePayload::read(p))
            .collect::<Result<Vec<_>>>()?;
        let meta = RequestMeta {
            annotator_id: self.config.annotator_id.clone(),
            template_id: task.template.template_id.clone(),
            bindings: task.bindings.clone(),
        };

        let result = |call: &RawCall, raw: &str, parsed: Option<Parsed>, status, warnings| AnnotationResult {
            annotator_id: self.config.annotator_id.clone(),
            template_id: task.template.template_id.clone(),
            cache_key: call.cache_key.clone(),
            raw_text: raw.to_string(),
            parsed,
            status,
            warnings,
        };

        let first = self.call(&prompt, &payloads, meta.clone());
        let first_raw = match &first.raw_text {
            Ok(raw) => raw.clone(),
            Err(e) => {
                return Ok(result(&first, "", None, Status::TransportFailed, vec![e.to_string()]));
            }
        };
        let first_parse = parse_response(&first_raw, &task.expect);
        if let Ok((parsed, warnings)) = &first_parse {
            if !needs_reformat(parsed) {
                return Ok(result(&first, &first_raw, Some(parsed.clone()), Status::Ok, warnings.clone()));
            }
        }

        let retry_prompt = format!("{prompt}\n\n{}", task.template.expected_tag.reformat_reminder());
        let second = self.call(&retry_prompt, &payloads, meta);
        if let Ok(raw) = &second.raw_text {
            match parse_response(raw, &task.expect) {
                Ok((parsed, warnings)) => {
                    return Ok(result(&second, raw, Some(fill_justification(parsed)), Status::Ok, warnings));
                }
                Err(failure) => {
                    if first_parse.is_err() {
                        return Ok(result(&second, raw, None, Status::ParseFailed, vec![failure.reason]));
                    }
                }
            }
        }
        match first_parse {
            Ok((parsed, warnings)) => Ok(result(&first, &first_raw, Some(fill_justification(parsed)), Status::Ok, warnings)),
            Err(failure) => Ok(result(&first, &first_raw, None, Status::ParseFailed, vec![failure.reason])),
        }
    }
}

fn needs_reformat(parsed: &Parsed) -> bool {
    matches!(parsed, Parsed::Score { justification, .. } if justification.trim().is_empty())
}

fn fill_justification(parsed: Parsed) -> Parsed {
    match parsed {
        Parsed::Score { score, justification } if justification.trim().is_empty() => Parsed::Score {
            score,
            justification: MISSING_JUSTIFICATION.to_string(),
        },
        other => other,
    }
}

fn parse_response(raw: &str, expect: &Expect) -> Result<(Parsed, Vec<String>), ParseFailure> {
    match expect {
        Expect::Label { allowed } => {
            let allowed: Vec<&str> = allowed.iter().map(String::as_str).collect();
            parse_label_tag(raw, &allowed).map(|l| (Parsed::Label(l), Vec::new()))
        }
        Expect::SentenceNumbers { valid_ids } => parse_sentence_numbers(raw, valid_ids).map(|sel| {
            for w in &sel.warnings {
                log::debug!("{w}");
            }
            (Parsed::SentenceIds(sel.ids), sel.warnings)
        }),
        Expect::Score => parse_score_tag(raw).map(|(score, justification)| {
            (Parsed::Score { score, justification }, Vec::new())
        }),
    }
}

/// Members that can judge images.
pub fn vision_members(panel: &[Annotator]) -> impl Iterator<Item = &Annotator> {
    panel.iter().filter(|a| a.is_vision())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    /// Replies with a fixed script, one entry per call.
    struct Scripted {
        replies: Mutex<Vec<Result<String, TransportError>>>,
        prompts: Mutex<Vec<String>>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<&str, &str>>) -> Arc<Self> {
            Arc::new(Self {
                replies: Mutex::new(
                    replies
                        .into_iter()
                        .rev()
                        .map(|r| r.map(str::to_string).map_err(|e| TransportError(e.to_string())))
                        .collect(),
                ),
                prompts: Mutex::new(Vec::new()),
            })
        }
    }

    impl ChatBackend for Scripted {
        fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
            self.prompts.lock().unwrap().push(request.user_text().to_string());
            self.replies
                .lock()
                .unwrap()
                .pop()
                .unwrap_or_else(|| Err(TransportError("script exhausted".into())))
        }
    }

    fn config(modality: Modality) -> AnnotatorConfig {
        let mut c = AnnotatorConfig::new("a1", "stub:test", "model-x", modality);
        c.backoff_ms = 0;
        c
    }

    fn label_task(t: &PromptTemplate) -> AnnotationTask<'_> {
        AnnotationTask {
            template: t,
            bindings: [("X", "value")].iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            images: vec![],
            expect: Expect::Label {
                allowed: vec!["relevant".into(), "not_relevant".into()],
            },
        }
    }

    fn template() -> PromptTemplate {
        PromptTemplate::new("t", "Judge {X}.", ExpectedTag::Label)
    }

    #[test]
    fn cache_hit_short_circuits_the_backend() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let backend = Arc::new(StubBackend::new(vec![StubRule {
            response: Some("<Label>relevant</Label>".into()),
            ..Default::default()
        }]));
        let a = Annotator::new(config(Modality::Text), backend.clone(), Some(cache.clone()));
        let t = template();
        let first = a.annotate(&label_task(&t)).unwrap();
        let second = a.annotate(&label_task(&t)).unwrap();
        assert_eq!(backend.calls(), 1);
        assert_eq!(first, second);
        assert_eq!(first.label(), Some("relevant"));
        assert!(cache.get(&first.cache_key).is_some());

        // A fresh annotator over the same cache directory is also served from disk.
        let b = Annotator::new(config(Modality::Text), backend.clone(), Some(ResponseCache::new(dir.path()).unwrap()));
        assert_eq!(b.annotate(&label_task(&t)).unwrap().raw_text, first.raw_text);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn cache_key_tracks_inputs() {
        let a = Annotator::new(config(Modality::Vision), Scripted::new(vec![]), None);
        let img = ImagePayload { mime: "image/png".into(), bytes: vec![1] };
        let req = |p: &str, imgs: &[ImagePayload]| a.build_request(p, imgs, RequestMeta::default());
        let base = cache_key("t", "m", &req("p", &[]));
        assert_eq!(base, cache_key("t", "m", &req("p", &[])));
        assert_ne!(base, cache_key("t2", "m", &req("p", &[])));
        assert_ne!(base, cache_key("t", "m2", &req("p", &[])));
        assert_ne!(base, cache_key("t", "m", &req("p2", &[])));
        assert_ne!(base, cache_key("t", "m", &req("p", &[img])));
    }

    #[test]
    fn transport_failure_after_max_retries() {
        let backend = Arc::new(StubBackend::new(vec![StubRule { fail: true, ..Default::default() }]));
        let mut c = config(Modality::Text);
        c.max_retries = 3;
        let a = Annotator::new(c, backend.clone(), None);
        let t = template();
        let r = a.annotate(&label_task(&t)).unwrap();
        assert_eq!(r.status, Status::TransportFailed);
        assert!(r.parsed.is_none());
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn transient_failure_recovers() {
        let backend = Scripted::new(vec![Err("503"), Ok("<Label>not_relevant</Label>")]);
        let a = Annotator::new(config(Modality::Text), backend, None);
        let t = template();
        assert_eq!(a.annotate(&label_task(&t)).unwrap().label(), Some("not_relevant"));
    }

    #[test]
    fn modality_mismatch() {
        let a = Annotator::new(config(Modality::Text), Scripted::new(vec![]), None);
        let t = template();
        let mut task = label_task(&t);
        task.images = vec![PathBuf::from("fig.png")];
        let err = a.annotate(&task).unwrap_err();
        assert!(err.to_string().contains("modality mismatch"));
    }

    #[test]
    fn vision_request_carries_image() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("fig.png");
        std::fs::write(&img, [0x89, b'P', b'N', b'G']).unwrap();
        let backend = Arc::new(StubBackend::new(vec![
            StubRule {
                with_images: Some(true),
                response: Some("<Label>relevant</Label>".into()),
                ..Default::default()
            },
            StubRule { response: Some("<Label>not_relevant</Label>".into()), ..Default::default() },
        ]));
        let a = Annotator::new(config(Modality::Vision), backend, None);
        let t = template();
        let mut task = label_task(&t);
        task.images = vec![img];
        assert_eq!(a.annotate(&task).unwrap().label(), Some("relevant"));

        task.images = vec![dir.path().join("missing.png")];
        assert!(matches!(a.annotate(&task), Err(Error::ImagePayload { .. })));
    }

    #[test]
    fn reformat_retry_on_parse_failure() {
        let backend = Scripted::new(vec![Ok("I think it is relevant."), Ok("<Label>relevant</Label>")]);
        let a = Annotator::new(config(Modality::Text), backend.clone(), None);
        let t = template();
        let r = a.annotate(&label_task(&t)).unwrap();
        assert_eq!(r.status, Status::Ok);
        let prompts = backend.prompts.lock().unwrap();
        assert_eq!(prompts.len(), 2);
        assert!(prompts[1].starts_with(&prompts[0]));
        assert!(prompts[1].contains("Reminder"));
    }

    #[test]
    fn parse_failed_after_reformat() {
        let backend = Scripted::new(vec![Ok("nope"), Ok("still nope")]);
        let a = Annotator::new(config(Modality::Text), backend, None);
        let t = template();
        let r = a.annotate(&label_task(&t)).unwrap();
        assert_eq!(r.status, Status::ParseFailed);
        assert!(r.parsed.is_none());
        assert_eq!(r.raw_text, "still nope");
    }

    #[test]
    fn empty_justification_retried_then_placeholder() {
        let backend = Scripted::new(vec![Ok("<score>0.0</score>"), Ok("<score>0.0</score><justification></justification>")]);
        let a = Annotator::new(config(Modality::Text), backend.clone(), None);
        let t = PromptTemplate::new("s", "Score {X}.", ExpectedTag::ScoreAndJustification);
        let mut task = label_task(&t);
        task.expect = Expect::Score;
        let r = a.annotate(&task).unwrap();
        assert_eq!(r.score(), Some((0.0, MISSING_JUSTIFICATION)));
        assert_eq!(backend.prompts.lock().unwrap().len(), 2);
    }

    #[test]
    fn api_key_variable_name() {
        let c = AnnotatorConfig::new("gpt-oss-120b", "http://x", "m", Modality::Text);
        assert_eq!(c.api_key_var(), "GPT_OSS_120B_API_KEY");
    }
}
