//! Scores a ranked evidence run against relevance judgements.
//!
//! cargo run --example retrieval_eval [run-file qrels-file]

use std::collections::BTreeSet;
use std::path::Path;

use overclaim::ireval::{evaluate_run, read_qrels, read_run, Qrels, RankedRun, DEFAULT_KS};

fn ids(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn main() -> overclaim::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (runs, qrels) = if let [run, qrels] = args.as_slice() {
        (read_run(Path::new(run))?, read_qrels(Path::new(qrels))?)
    } else {
        let runs = vec![
            RankedRun {
                claim_id: "c1".into(),
                ranking: ids(&["e3", "e1", "e7", "e2"]),
                scores: None,
            },
            RankedRun {
                claim_id: "c2".into(),
                ranking: ids(&["e5", "e4", "e9", "e8"]),
                scores: None,
            },
        ];
        let mut qrels = Qrels::new();
        qrels.insert("c1".into(), ids(&["e1", "e2"]).into_iter().collect());
        qrels.insert("c2".into(), ids(&["e8"]).into_iter().collect());
        qrels.insert("c3".into(), BTreeSet::new());
        (runs, qrels)
    };
    let report = evaluate_run(&runs, &qrels, &DEFAULT_KS)?;
    print!("{}", report.render("example"));
    Ok(())
}
