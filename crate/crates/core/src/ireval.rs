//! Ranking metrics for claim-to-evidence retrieval: MAP, MRR, Recall@k and
//! NDCG@k over binary relevance, with run and qrels file readers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [5, 10, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRun {
    pub claim_id: String,
    /// Evidence IDs, best first.
    pub ranking: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

/// Relevant evidence per claim. Claims judged without any relevant item
/// map to an empty set.
pub type Qrels = BTreeMap<String, BTreeSet<String>>;

/// Mean over relevant items of the precision at each one's rank; relevant
/// items that were not retrieved contribute zero.
pub fn average_precision(ranking: &[String], relevant: &BTreeSet<String>) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranking.iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

/// 1 / rank of the first relevant item, or 0 if none was retrieved.
pub fn reciprocal_rank(ranking: &[String], relevant: &BTreeSet<String>) -> f64 {
    ranking
        .iter()
        .position(|id| relevant.contains(id))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

pub fn recall_at_k(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let found = ranking.iter().take(k).filter(|id| relevant.contains(*id)).count();
    found as f64 / relevant.len() as f64
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-gain NDCG with discount 1/log2(rank + 1).
pub fn ndcg_at_k(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(*id))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let ideal: f64 = (1..=relevant.len().min(k)).map(discount).sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

/// Claims that have at least one relevant item; the others are left out of
/// every macro average.
fn evaluated(qrels: &Qrels) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
    qrels.iter().filter(|(_, rel)| !rel.is_empty())
}

fn index_runs(runs: &[RankedRun]) -> BTreeMap<&str, &RankedRun> {
    runs.iter().map(|r| (r.claim_id.as_str(), r)).collect()
}

fn check_coverage(runs: &BTreeMap<&str, &RankedRun>, qrels: &Qrels) -> Result<()> {
    let missing: Vec<String> = evaluated(qrels)
        .filter(|(c, _)| !runs.contains_key(c.as_str()))
        .map(|(c, _)| c.clone())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingRuns(missing))
    }
}

fn macro_average(
    runs: &BTreeMap<&str, &RankedRun>,
    qrels: &Qrels,
    metric: impl Fn(&[String], &BTreeSet<String>) -> f64,
) -> f64 {
    let values: Vec<f64> = evaluated(qrels)
        .map(|(c, rel)| runs.get(c.as_str()).map_or(0.0, |r| metric(&r.ranking, rel)))
        .collect();
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn mean_average_precision(runs: &[RankedRun], qrels: &Qrels) -> Result<f64> {
    let index = index_runs(runs);
    check_coverage(&index, qrels)?;
    Ok(macro_average(&index, qrels, average_precision))
}

pub fn mrr(runs: &[RankedRun], qrels: &Qrels) -> Result<f64> {
    let index = index_runs(runs);
    check_coverage(&index, qrels)?;
    Ok(macro_average(&index, qrels, reciprocal_rank))
}

/// Macro-averaged metrics as fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub n_claims: usize,
    /// Judged claims without any relevant item.
    pub n_excluded: usize,
    pub map: f64,
    pub mrr: f64,
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
}

pub fn percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

impl RetrievalReport {
    /// Two-line aligned table with percentages to two decimals.
    pub fn render(&self, name: &str) -> String {
        let mut headers = vec!["Run".to_string(), "MAP".into(), "MRR".into()];
        let mut row = vec![name.to_string(), percent(self.map), percent(self.mrr)];
        for (k, v) in &self.recall {
            headers.push(format!("R@{k}"));
            row.push(percent(*v));
        }
        for (k, v) in &self.ndcg {
            headers.push(format!("N@{k}"));
            row.push(percent(*v));
        }
        let mut out = crate::report::Table::new(headers);
        out.push(row);
        let mut s = out.render();
        let _ = writeln!(s, "({} claims evaluated, {} without relevant evidence excluded)", self.n_claims, self.n_excluded);
        s
    }
}

pub fn evaluate_run(runs: &[RankedRun], qrels: &Qrels, ks: &[usize]) -> Result<RetrievalReport> {
    if ks.contains(&0) {
        return Err(Error::Precondition("metric cutoffs must be >= 1".into()));
    }
    let index = index_runs(runs);
    check_coverage(&index, qrels)?;
    for r in runs {
        if !qrels.contains_key(&r.claim_id) {
            log::warn!("run has unjudged claim {}; ignored", r.claim_id);
        }
    }
    Ok(RetrievalReport {
        n_claims: evaluated(qrels).count(),
        n_excluded: qrels.values().filter(|r| r.is_empty()).count(),
        map: macro_average(&index, qrels, average_precision),
        mrr: macro_average(&index, qrels, reciprocal_rank),
        recall: ks
            .iter()
            .map(|&k| (k, macro_average(&index, qrels, |r, rel| recall_at_k(r, rel, k))))
            .collect(),
        ndcg: ks
            .iter()
            .map(|&k| (k, macro_average(&index, qrels, |r, rel| ndcg_at_k(r, rel, k))))
            .collect(),
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        field: format!("line {line}"),
        message: message.into(),
    }
}

/// Parses `claim_id evidence_id rank score` lines. Entries are ordered by
/// rank, ties keeping input order; repeated evidence IDs keep their first
/// entry.
pub fn parse_run(text: &str, path: &Path) -> Result<Vec<RankedRun>> {
    let mut per_claim: BTreeMap<String, Vec<(u64, usize, String, f64)>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [claim, evidence, rank, score] = fields[..] else {
            return Err(parse_err(path, n + 1, format!("expected 4 fields, found {}", fields.len())));
        };
        let rank: u64 = rank
            .parse()
            .map_err(|_| parse_err(path, n + 1, format!("bad rank {rank:?}")))?;
        let score: f64 = score
            .parse()
            .map_err(|_| parse_err(path, n + 1, format!("bad score {score:?}")))?;
        per_claim
            .entry(claim.to_string())
            .or_default()
            .push((rank, n, evidence.to_string(), score));
    }
    Ok(per_claim
        .into_iter()
        .map(|(claim_id, mut entries)| {
            entries.sort_by_key(|e| (e.0, e.1));
            let mut seen = HashSet::new();
            entries.retain(|e| {
                let fresh = seen.insert(e.2.clone());
                if !fresh {
                    log::warn!("{claim_id}: duplicate evidence {} in run; keeping first", e.2);
                }
                fresh
            });
            RankedRun {
                claim_id,
                scores: Some(entries.iter().map(|e| e.3).collect()),
                ranking: entries.into_iter().map(|e| e.2).collect(),
            }
        })
        .collect())
}

/// Parses `claim_id evidence_id relevance` lines with relevance 0 or 1.
pub fn parse_qrels(text: &str, path: &Path) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [claim, evidence, rel] = fields[..] else {
            return Err(parse_err(path, n + 1, format!("expected 3 fields, found {}", fields.len())));
        };
        let entry = qrels.entry(claim.to_string()).or_default();
        match rel {
            "1" => {
                entry.insert(evidence.to_string());
            }
            "0" => {}
            other => return Err(parse_err(path, n + 1, format!("relevance must be 0 or 1, found {other:?}"))),
        }
    }
    Ok(qrels)
}

pub fn read_run(path: &Path) -> Result<Vec<RankedRun>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text, path)
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&ids(&["a", "b", "c"]), &set(&["a", "b"])), 1.0);
        let ap = average_precision(&ids(&["a", "x", "b"]), &set(&["a", "b"]));
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&ids(&["x", "y"]), &set(&["a"])), 0.0);
    }

    #[test]
    fn mrr_examples() {
        let qrels: Qrels = [("c1".to_string(), set(&["a"])), ("c2".to_string(), set(&["b"]))].into();
        let runs = vec![
            RankedRun { claim_id: "c1".into(), ranking: ids(&["a", "x"]), scores: None },
            RankedRun { claim_id: "c2".into(), ranking: ids(&["x", "y", "z", "b"]), scores: None },
        ];
        assert!((mrr(&runs, &qrels).unwrap() - 1.25 / 2.0).abs() < 1e-15);
        assert!((reciprocal_rank(&ids(&["x", "y", "a"]), &set(&["a"])) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn recall_and_ndcg_examples() {
        let rel: BTreeSet<String> = (0..10).map(|i| format!("r{i}")).collect();
        let ranking = ids(&["r0", "x", "r1", "y", "z", "r2"]);
        assert!((recall_at_k(&ranking, &rel, 5) - 0.2).abs() < 1e-15);
        let n = ndcg_at_k(&ids(&["a", "x", "b"]), &set(&["a", "b"]), 3);
        assert!((n - (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2())).abs() < 1e-15);
        assert_eq!(ndcg_at_k(&ids(&["x", "a"]), &set(&["a"]), 1), 0.0);
        assert_eq!(ndcg_at_k(&ids(&["a", "b"]), &set(&["a", "b"]), 10), 1.0);
    }

    #[test]
    fn oracle_run_scores_100() {
        let qrels: Qrels = [
            ("c1".to_string(), set(&["a", "b"])),
            ("c2".to_string(), set(&["c"])),
            ("c3".to_string(), set(&[])),
        ]
        .into();
        let runs = vec![
            RankedRun { claim_id: "c1".into(), ranking: ids(&["b", "a", "x"]), scores: None },
            RankedRun { claim_id: "c2".into(), ranking: ids(&["c", "y"]), scores: None },
        ];
        let r = evaluate_run(&runs, &qrels, &DEFAULT_KS).unwrap();
        assert_eq!((r.n_claims, r.n_excluded), (2, 1));
        assert_eq!(percent(r.map), "100.00");
        assert_eq!(percent(r.mrr), "100.00");
        assert!(r.ndcg.values().all(|&v| percent(v) == "100.00"));
        assert!(r.render("oracle").contains("100.00"));
    }

    #[test]
    fn missing_runs_listed() {
        let qrels: Qrels = [("c1".to_string(), set(&["a"])), ("c2".to_string(), set(&["b"]))].into();
        let runs = vec![RankedRun { claim_id: "c1".into(), ranking: ids(&["a"]), scores: None }];
        assert!(matches!(evaluate_run(&runs, &qrels, &[5]), Err(Error::MissingRuns(m)) if m == vec!["c2"]));
    }

    #[test]
    fn file_formats() {
        let run = parse_run("c1 e2 2 0.5\nc1 e1 1 0.9\nc1 e1 3 0.1\n\nc2 e9 1 1.0\n", Path::new("run")).unwrap();
        assert_eq!(run[0].ranking, ids(&["e1", "e2"]));
        assert_eq!(run[0].scores, Some(vec![0.9, 0.5]));
        assert!(parse_run("c1 e1 x 0.9", Path::new("run")).is_err());
        assert!(parse_run("c1 e1 1", Path::new("run")).is_err());

        let q = parse_qrels("c1 e1 1\nc1 e2 0\nc2 e3 0\n", Path::new("q")).unwrap();
        assert_eq!(q["c1"], set(&["e1"]));
        assert!(q["c2"].is_empty());
        assert!(parse_qrels("c1 e1 2", Path::new("q")).is_err());
    }

    proptest! {
        #[test]
        fn swapping_relevant_up_never_hurts(
            n in 2usize..25,
            rel_mask in prop::collection::vec(any::<bool>(), 25),
            pos in 1usize..25,
            k in 1usize..30,
        ) {
            let ranking: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
            let relevant: BTreeSet<String> = (0..n).filter(|&i| rel_mask[i]).map(|i| format!("e{i}")).collect();
            prop_assume!(!relevant.is_empty());
            let pos = pos % n;
            prop_assume!(pos > 0 && relevant.contains(&ranking[pos]) && !relevant.contains(&ranking[pos - 1]));
            let mut better = ranking.clone();
            better.swap(pos, pos - 1);
            prop_assert!(average_precision(&better, &relevant) >= average_precision(&ranking, &relevant));
            prop_assert!(ndcg_at_k(&better, &relevant, k) >= ndcg_at_k(&ranking, &relevant, k));
            prop_assert!(recall_at_k(&better, &relevant, k) >= recall_at_k(&ranking, &relevant, k));
        }

        #[test]
        fn metrics_in_unit_interval_and_saturate(
            n in 1usize..25,
            rel_mask in prop::collection::vec(any::<bool>(), 25),
        ) {
            let ranking: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
            let relevant: BTreeSet<String> = (0..n).filter(|&i| rel_mask[i]).map(|i| format!("e{i}")).collect();
            prop_assume!(!relevant.is_empty());
            for k in [1, 5, 10, 20] {
                let (r, d) = (recall_at_k(&ranking, &relevant, k), ndcg_at_k(&ranking, &relevant, k));
                prop_assert!((0.0..=1.0).contains(&r) && (0.0..=1.0 + 1e-12).contains(&d));
            }
            prop_assert_eq!(recall_at_k(&ranking, &relevant, n), recall_at_k(&ranking, &relevant, n + 7));
            prop_assert_eq!(ndcg_at_k(&ranking, &relevant, n), ndcg_at_k(&ranking, &relevant, n + 7));
        }
    }
}
