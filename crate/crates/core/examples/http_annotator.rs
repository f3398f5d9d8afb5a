//! Classifies one sentence with a live OpenAI-compatible endpoint.
//!
//! OVERCLAIM_ENDPOINT=http://localhost:8000/v1/chat/completions \
//! OVERCLAIM_MODEL=my-model LIVE_API_KEY=... cargo run --example http_annotator

use overclaim::annotator::{template, AnnotationTask, Annotator, AnnotatorConfig, Expect, Modality, ResponseCache};
use overclaim::claims::ClaimLabel;

fn main() -> overclaim::Result<()> {
    env_logger::init();
    let Ok(endpoint) = std::env::var("OVERCLAIM_ENDPOINT") else {
        eprintln!("set OVERCLAIM_ENDPOINT (and optionally OVERCLAIM_MODEL, LIVE_API_KEY)");
        return Ok(());
    };
    let model = std::env::var("OVERCLAIM_MODEL").unwrap_or_else(|_| "default".into());
    let cache = ResponseCache::new(std::env::temp_dir().join("overclaim-example-cache"))?;
    let annotator = Annotator::from_config(AnnotatorConfig::new("live", &endpoint, &model, Modality::Text), None, Some(cache))?;

    let tpl = template::own_statement();
    let task = AnnotationTask {
        template: &tpl,
        bindings: [
            ("ABSTRACT", "We present SparseRAG, a retriever for long documents."),
            ("INTRODUCTION", "Long-document QA is hard. We introduce SparseRAG."),
            ("SENTENCE", "We introduce SparseRAG."),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect(),
        images: Vec::new(),
        expect: Expect::Label {
            allowed: ClaimLabel::ALL.iter().map(|l| l.as_str().to_string()).collect(),
        },
    };
    let result = annotator.annotate(&task)?;
    println!("status {:?}, label {:?}", result.status, result.label());
    Ok(())
}
