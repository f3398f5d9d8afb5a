//! Splits papers by venue-aware largest-remainder apportioning.
//!
//! cargo run --example split_and_export [seed]

use overclaim::corpus::Venue;
use overclaim::dataset::{split_papers, Split, SplitRatios};

fn main() -> overclaim::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(13);
    let ids: Vec<String> = (0..40).map(|i| format!("paper-{i:02}")).collect();
    let papers: Vec<(&str, Venue)> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), if i % 5 == 0 { Venue::NeurIps } else { Venue::Iclr }))
        .collect();
    let assignment = split_papers(&papers, SplitRatios::default(), seed)?;
    for split in Split::ALL {
        let members: Vec<&str> = assignment.papers_in(split).collect();
        let neurips = members
            .iter()
            .filter(|id| papers.iter().any(|(p, v)| p == *id && *v == Venue::NeurIps))
            .count();
        println!("{split}: {} papers ({neurips} NeurIPS)", members.len());
    }
    println!("paper-07 -> {:?}", assignment.split_of("paper-07"));
    Ok(())
}
