//! The HTTP backend against a local OpenAI-compatible mock server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

use overclaim::annotator::{template, Annotator, AnnotatorConfig, AnnotationTask, Expect, Modality, RequestMeta, ResponseCache};

#[derive(Debug, Clone)]
struct Seen {
    authorization: Option<String>,
    body: Value,
}

/// Serves one scripted `(status, content)` reply per connection and records
/// what it received.
fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for (status, content) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    match name.to_ascii_lowercase().as_str() {
                        "content-length" => length = value.trim().parse().unwrap(),
                        "authorization" => authorization = Some(value.trim().to_string()),
                        _ => {}
                    }
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Seen {
                authorization,
                body: serde_json::from_slice(&body).unwrap(),
            });
            let payload = if status == 200 {
                json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
            } else {
                json!({"error": {"message": content}})
            }
            .to_string();
            let reason = if status == 200 { "OK" } else { "Internal Server Error" };
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn config(id: &str, url: &str) -> AnnotatorConfig {
    let mut c = AnnotatorConfig::new(id, url, "mock-model", Modality::Text);
    c.backoff_ms = 1;
    c.timeout_secs = 10;
    c
}

fn meta(id: &str) -> RequestMeta {
    RequestMeta {
        annotator_id: id.into(),
        template_id: "own_statement".into(),
        ..RequestMeta::default()
    }
}

#[test]
fn sends_chat_request_and_reads_content() {
    let (url, seen, handle) = mock_server(vec![(200, "<Label>Original Statement</Label>".into())]);
    let annotator = Annotator::from_config(config("mock-ok", &url), None, None).unwrap();
    let call = annotator.call("Is this a claim?", &[], meta("mock-ok"));
    handle.join().unwrap();
    assert_eq!(call.raw_text.unwrap(), "<Label>Original Statement</Label>");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].body["model"], "mock-model");
    assert_eq!(seen[0].body["messages"][0]["role"], "user");
    assert_eq!(seen[0].body["messages"][0]["content"], "Is this a claim?");
}

#[test]
fn retries_after_server_error() {
    let (url, seen, handle) = mock_server(vec![(500, "overloaded".into()), (200, "<Score>0.4</Score>".into())]);
    let annotator = Annotator::from_config(config("mock-retry", &url), None, None).unwrap();
    let call = annotator.call("Score this.", &[], meta("mock-retry"));
    handle.join().unwrap();
    assert_eq!(call.raw_text.unwrap(), "<Score>0.4</Score>");
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn gives_up_after_max_retries() {
    let (url, seen, handle) = mock_server(vec![(500, "a".into()), (500, "b".into())]);
    let mut c = config("mock-down", &url);
    c.max_retries = 2;
    let annotator = Annotator::from_config(c, None, None).unwrap();
    let call = annotator.call("Anything.", &[], meta("mock-down"));
    handle.join().unwrap();
    assert!(call.raw_text.unwrap_err().to_string().contains("500"));
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn authorization_comes_from_annotator_key_variable() {
    std::env::set_var("MOCK_AUTH_API_KEY", "sk-test-123");
    let (url, seen, handle) = mock_server(vec![(200, "<Label>Not Original Statement</Label>".into())]);
    let annotator = Annotator::from_config(config("mock-auth", &url), None, None).unwrap();
    annotator.call("Hello.", &[], meta("mock-auth"));
    handle.join().unwrap();
    assert_eq!(seen.lock().unwrap()[0].authorization.as_deref(), Some("Bearer sk-test-123"));
}

#[test]
fn annotate_parses_and_caches_responses() {
    let cache_dir = tempfile::tempdir().unwrap();
    let (url, seen, handle) = mock_server(vec![(200, "Reasoning. <Label>Original Statement</Label>".into())]);
    let annotator = Annotator::from_config(
        config("mock-cache", &url),
        None,
        Some(ResponseCache::new(cache_dir.path()).unwrap()),
    )
    .unwrap();
    let tpl = template::own_statement();
    let task = || AnnotationTask {
        template: &tpl,
        bindings: [
            ("ABSTRACT", "We show X."),
            ("INTRODUCTION", "Intro."),
            ("SENTENCE", "We show X."),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect(),
        images: Vec::new(),
        expect: Expect::Label {
            allowed: vec!["Original Statement".into(), "Not Original Statement".into()],
        },
    };
    let first = annotator.annotate(&task()).unwrap();
    handle.join().unwrap();
    // The server is gone; the second answer must come from the cache.
    let second = annotator.annotate(&task()).unwrap();
    assert_eq!(first.label(), Some("Original Statement"));
    assert_eq!(second.label(), Some("Original Statement"));
    assert_eq!(seen.lock().unwrap().len(), 1);
}
