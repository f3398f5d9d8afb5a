//! Renders the overstatement prompt, parses a scored response and averages
//! scores into a soft label with its ordinal bin.
//!
//! cargo run --example overstatement_scoring

use overclaim::annotator::{parse_score_tag, template, Bindings};
use overclaim::scoring::{discretise, soft_label, ScoreContext, ScoreRecord};

fn main() -> overclaim::Result<()> {
    let mut bindings = Bindings::new();
    bindings.insert("CLAIM".into(), "SparseRAG solves long-document QA in all settings.".into());
    bindings.insert(
        "EVIDENCE".into(),
        "Text (sentences 12-13): Accuracy rises from 61.2 to 64.3 on NarrativeQA and from 43.0 to 46.1 on QASPER.".into(),
    );
    println!("{}\n", template::overstatement().render(&bindings)?);

    let raw = "The evidence covers two datasets only.\n<score>0.85</score>\n\
               <justification>\"All settings\" is not supported by two benchmarks.</justification>";
    let (score, justification) = parse_score_tag(raw).expect("well-formed response");
    println!("parsed score {score} ({justification})");

    let contexts = [
        ScoreContext::PaperOnly,
        ScoreContext::Review("r1".into()),
        ScoreContext::Review("r2".into()),
    ];
    let records: Vec<ScoreRecord> = contexts
        .iter()
        .zip([0.85, 0.9, 0.75])
        .map(|(context, score)| ScoreRecord {
            claim_id: "iclr-sparserag:2".into(),
            annotator_id: "model-a".into(),
            context: context.clone(),
            score,
            justification: String::new(),
        })
        .collect();
    let label = soft_label(&records)?;
    println!(
        "soft label {:.4} over {} records, bin {}",
        label.mean_score, label.n_records, label.ordinal_bin
    );
    for s in [0.0, 0.19, 0.2, 0.55, 0.8, 1.0] {
        println!("discretise({s}) = {}", discretise(s)?);
    }
    Ok(())
}
