//! Extracts claims with an offline panel of rule-driven stub annotators.
//!
//! cargo run --example stub_panel_claims

use std::sync::Arc;

use overclaim::annotator::{Annotator, AnnotatorConfig, Modality, StubBackend, StubRule};
use overclaim::claims::{extract_claims, ClaimLabel};
use overclaim::corpus::load_paper;

fn rule(annotator: Option<&str>, contains: Option<&str>, label: &str) -> StubRule {
    StubRule {
        annotator: annotator.map(str::to_string),
        template: Some("own_statement".into()),
        slot: contains.map(|_| "SENTENCE".into()),
        contains: contains.map(str::to_string),
        response: Some(format!("<Label>{label}</Label>")),
        ..StubRule::default()
    }
}

fn main() -> overclaim::Result<()> {
    let paper = load_paper(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus/iclr-sparserag.json"))?;
    // Every annotator accepts sentences naming the method; "lenient" also
    // accepts everything else, which the majority overrules.
    let backend = Arc::new(StubBackend::new(vec![
        rule(Some("lenient"), None, "original_statement"),
        rule(None, Some("SparseRAG"), "original_statement"),
        rule(None, None, "not_original_statement"),
    ]));
    let panel: Vec<Annotator> = ["strict-a", "strict-b", "lenient"]
        .into_iter()
        .map(|id| {
            let mut config = AnnotatorConfig::new(id, "stub:", &format!("stub-{id}"), Modality::Text);
            config.backoff_ms = 0;
            Annotator::from_config(config, Some(Arc::clone(&backend)), None)
        })
        .collect::<overclaim::Result<_>>()?;

    let extraction = extract_claims(&paper, &panel, ClaimLabel::NotOriginalStatement)?;
    for v in &extraction.sentence_votes {
        let votes: Vec<String> = v.votes.iter().map(|(a, l)| format!("{a}={}", l.as_str())).collect();
        let consensus = v.consensus_label.map_or("-", |l| l.as_str());
        println!("{:>2} {consensus:<22} {}", v.sentence.sentence_id, votes.join(" "));
    }
    println!("\n{} claims, {} stub calls", extraction.claims.len(), backend.calls());
    for c in &extraction.claims {
        println!("{}: {}", c.claim_id, c.text());
    }
    Ok(())
}
