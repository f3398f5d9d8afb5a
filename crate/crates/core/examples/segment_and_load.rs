//! Segments scientific prose and loads a paper with global sentence IDs.
//!
//! cargo run --example segment_and_load

use overclaim::corpus::{load_paper, RuleSegmenter, SentenceSegmenter};

fn main() -> overclaim::Result<()> {
    let text = "Prior work (Lee et al., 2021) used dense retrieval. As shown in Fig. 2, \
                recall improves by 4.1 points, e.g. on QASPER. We release code!";
    for (i, s) in RuleSegmenter::default().split(text).iter().enumerate() {
        println!("{i}: {s}");
    }

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus/iclr-sparserag.json");
    let paper = load_paper(path)?;
    println!("\n{} ({}): {} sentences", paper.paper_id, paper.venue.as_str(), paper.sentence_count());
    for s in paper.sentences() {
        println!("{:>3} {:<12} {}", s.sentence_id, format!("{:?}", s.origin), s.text);
    }
    Ok(())
}
