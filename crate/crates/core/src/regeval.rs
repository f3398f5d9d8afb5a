//! Agreement between predicted and reference overstatement scores: the
//! concordance correlation coefficient, mean absolute error and Pearson r.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::SoftLabel;
use crate::stats::pearson;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CccResult {
    pub ccc: f64,
    /// Both samples constant with the same value; reported as 1.
    pub degenerate: bool,
}

/// Lin's concordance correlation coefficient with population moments:
/// 2 Sxy / (Sxx + Syy + n (mean_x - mean_y)^2), where S are centred sums.
pub fn ccc(pred: &[f64], reference: &[f64]) -> Result<CccResult> {
    if pred.len() != reference.len() || pred.len() < 2 {
        return Err(Error::Precondition("CCC needs two samples of equal length >= 2".into()));
    }
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<f64>() / n;
    let my = reference.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pred.iter().zip(reference) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let denom = sxx + syy + n * (mx - my) * (mx - my);
    if denom == 0.0 {
        return Ok(CccResult {
            ccc: 1.0,
            degenerate: true,
        });
    }
    Ok(CccResult {
        ccc: 2.0 * sxy / denom,
        degenerate: false,
    })
}

pub fn mae(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() || pred.is_empty() {
        return Err(Error::Precondition("MAE needs two non-empty samples of equal length".into()));
    }
    Ok(pred.iter().zip(reference).map(|(p, r)| (p - r).abs()).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n: usize,
    pub ccc: f64,
    pub ccc_degenerate: bool,
    pub mae: f64,
    /// `None` when either sample is constant.
    pub pearson: Option<f64>,
    /// Predictions moved into [0, 1] before evaluation.
    pub n_clamped: usize,
}

impl RegressionReport {
    pub fn render(&self, name: &str) -> String {
        let mut t = crate::report::Table::new(vec!["Model".into(), "CCC".into(), "MAE".into(), "ρ".into()]);
        t.push(vec![
            name.to_string(),
            format!("{:.3}", self.ccc),
            format!("{:.3}", self.mae),
            self.pearson.map_or("-".to_string(), |r| format!("{r:.3}")),
        ]);
        let mut s = t.render();
        s.push_str(&format!("({} claims", self.n));
        if self.n_clamped > 0 {
            s.push_str(&format!(", {} predictions clamped to [0, 1]", self.n_clamped));
        }
        s.push_str(")\n");
        s
    }
}

/// Evaluates predictions against reference soft labels keyed by claim ID.
/// The key sets must match; out-of-range predictions are clamped.
pub fn evaluate_predictions(
    predictions: &BTreeMap<String, f64>,
    reference: &BTreeMap<String, f64>,
) -> Result<RegressionReport> {
    let a: BTreeSet<&String> = predictions.keys().collect();
    let b: BTreeSet<&String> = reference.keys().collect();
    let missing: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::KeyMismatch { missing });
    }
    if let Some((k, v)) = reference.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Precondition(format!("reference score {v} for {k} is outside [0, 1]")));
    }
    let mut n_clamped = 0;
    let pred: Vec<f64> = predictions
        .iter()
        .map(|(k, &p)| {
            if (0.0..=1.0).contains(&p) {
                p
            } else {
                log::warn!("prediction {p} for {k} clamped to [0, 1]");
                n_clamped += 1;
                if p.is_nan() {
                    0.0
                } else {
                    p.clamp(0.0, 1.0)
                }
            }
        })
        .collect();
    let refs: Vec<f64> = reference.values().copied().collect();
    let c = ccc(&pred, &refs)?;
    Ok(RegressionReport {
        n: pred.len(),
        ccc: c.ccc,
        ccc_degenerate: c.degenerate,
        mae: mae(&pred, &refs)?,
        pearson: pearson(&pred, &refs).ok(),
        n_clamped,
    })
}

/// Reads `claim_id score` lines.
pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = match fields[..] {
            [claim, score] => score.parse::<f64>().ok().map(|s| (claim, s)),
            _ => None,
        };
        let (claim, score) = parsed.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            field: format!("line {}", n + 1),
            message: "expected `claim_id score`".into(),
        })?;
        if out.insert(claim.to_string(), score).is_some() {
            log::warn!("{}: duplicate prediction for {claim}; keeping the last", path.display());
        }
    }
    Ok(out)
}

/// Reads a soft-label JSONL file into claim ID -> mean score.
pub fn read_soft_labels(path: &Path) -> Result<BTreeMap<String, f64>> {
    let labels: Vec<SoftLabel> = crate::io::read_jsonl(path)?;
    Ok(labels.into_iter().map(|l| (l.claim_id, l.mean_score)).collect())
}
