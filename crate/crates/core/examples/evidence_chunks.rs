//! Packs a paper body into token-budgeted numbered chunks and merges
//! supporting sentence IDs into passages.
//!
//! cargo run --example evidence_chunks [budget]

use std::collections::BTreeSet;

use overclaim::corpus::load_paper;
use overclaim::evidence::{chunk_body, merge_runs};

fn main() -> overclaim::Result<()> {
    let budget: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(96);
    let paper = load_paper(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus/iclr-sparserag.json"))?;
    for chunk in chunk_body(&paper, budget) {
        println!(
            "chunk {} sentences {:?} ~{} tokens{}",
            chunk.chunk_index,
            chunk.sentence_ids,
            chunk.token_estimate,
            if chunk.oversized { " (oversized)" } else { "" }
        );
        println!("{}\n", chunk.rendered_numbered_text);
    }

    let selected: BTreeSet<u32> = [9, 10, 12, 15, 16, 17].into_iter().collect();
    for gap in 0..3 {
        println!("gap {gap}: {:?}", merge_runs(&selected, gap));
    }
    Ok(())
}
