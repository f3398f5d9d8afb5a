//! Compares predicted overstatement scores with reference soft labels.
//!
//! cargo run --example regression_eval [predictions reference]

use std::collections::BTreeMap;
use std::path::Path;

use overclaim::regeval::{evaluate_predictions, read_predictions, read_soft_labels};

fn main() -> overclaim::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (pred, reference) = if let [p, r] = args.as_slice() {
        (read_predictions(Path::new(p))?, read_soft_labels(Path::new(r))?)
    } else {
        let reference: BTreeMap<String, f64> =
            [0.1, 0.25, 0.4, 0.55, 0.7, 0.85].iter().enumerate().map(|(i, s)| (format!("c{i}"), *s)).collect();
        let pred = reference.iter().map(|(k, v)| (k.clone(), (v * 0.8 + 0.15).min(1.0))).collect();
        (pred, reference)
    };
    print!("{}", evaluate_predictions(&pred, &reference)?.render("shrunk"));
    Ok(())
}
