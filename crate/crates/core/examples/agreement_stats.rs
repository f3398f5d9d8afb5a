//! Krippendorff's alpha, leave-one-out consensus agreement and Welch's
//! t-test on small hand-made data.
//!
//! cargo run --example agreement_stats

use std::collections::BTreeMap;

use overclaim::stats::{krippendorff_alpha, leave_one_out_agreement, welch_t_test, Level, ReliabilityMatrix};

fn main() -> overclaim::Result<()> {
    let rows = vec![
        vec![Some(1), Some(1), Some(2)],
        vec![Some(2), Some(2), Some(2)],
        vec![Some(3), Some(2), Some(3)],
        vec![Some(1), None, Some(1)],
        vec![Some(4), Some(3), Some(4)],
        vec![Some(2), Some(1), None],
    ];
    for level in [Level::Nominal, Level::Ordinal] {
        let a = krippendorff_alpha(&ReliabilityMatrix::from_rows(rows.clone(), level)?)?;
        println!("{level:?} alpha = {:.4} over {} pairable values", a.alpha, a.n_pairable);
    }

    let votes: Vec<BTreeMap<String, bool>> = [
        [true, true, false, false],
        [true, false, true, false],
        [false, true, true, true],
        [true, true, true, false],
        [false, false, false, true],
        [true, false, false, true],
    ]
    .iter()
    .map(|row| row.iter().enumerate().map(|(i, v)| (format!("m{i}"), *v)).collect())
    .collect();
    for excluded in ["m0", "m1", "m2", "m3"] {
        let a = leave_one_out_agreement(&votes, excluded, &false)?;
        println!("without {excluded}: alpha = {:.4}", a.alpha);
    }

    let w = welch_t_test(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0])?;
    println!("Welch t = {:.4}, dof = {:.2}, p = {:.4}", w.t, w.dof, w.p.unwrap_or(f64::NAN));
    Ok(())
}
