//! Paper-level train/dev/test splits, dataset statistics, and training-data
//! exports for external reranker and scorer fine-tuning.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{PaperDocument, Venue};
use crate::error::{Error, Result};
use crate::evidence::{ClaimEvidenceSet, EvidenceKind};
use crate::io;
use crate::scoring::{render_evidence, ScoreContext, ScoreRecord, SoftLabel};

/// System text for reranker fine-tuning pairs.
pub const RETRIEVAL_INSTRUCTION: &str = "You are an evidence verification assistant. Given a claim and a document, determine if the document provides supporting evidence for the claim.\n\nINSTRUCTION: Does the following document provide supporting evidence for the claim?";

/// System prompt for scorer fine-tuning records.
pub const SCORER_SYSTEM_PROMPT: &str = "You are a model specialized in assessing overstated claims using text and image evidence. You must score each claim based on how overstated or exaggerated it is with respect to the evidence, on a continuous scale from 0 to 1 where 0 means well-stated and 1 means overstated. Provide the final score as <score>value</score> followed by a brief reasoning.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    /// Proportions of 536 / 259 / 77 papers.
    fn default() -> Self {
        Self {
            train: 536.0 / 872.0,
            dev: 259.0 / 872.0,
            test: 77.0 / 872.0,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Split(format!("ratios must be non-negative: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }

    fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub assignment: BTreeMap<String, Split>,
}

/// Paper ID of a claim ID of the form `paper_id:sentence_id`.
pub fn paper_of_claim(claim_id: &str) -> &str {
    claim_id.rsplit_once(':').map_or(claim_id, |(p, _)| p)
}

impl SplitAssignment {
    pub fn split_of(&self, paper_id: &str) -> Option<Split> {
        self.assignment.get(paper_id).copied()
    }

    pub fn split_of_claim(&self, claim_id: &str) -> Option<Split> {
        self.split_of(paper_of_claim(claim_id))
    }

    pub fn papers_in(&self, split: Split) -> impl Iterator<Item = &str> {
        self.assignment
            .iter()
            .filter(move |(_, s)| **s == split)
            .map(|(p, _)| p.as_str())
    }
}

/// Largest-remainder apportionment of `n` items over `weights`; ties go to
/// the earlier weight.
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return vec![0; weights.len()];
    }
    let raw: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Deterministic paper-level split. Sorted paper IDs are shuffled with a
/// seeded ChaCha generator, target counts follow the ratios, and NeurIPS
/// papers are only ever placed in dev or test. A train shortfall caused by
/// that exclusion is logged and the remaining papers are divided between
/// dev and test in proportion to their ratios.
pub fn split_papers(papers: &[(&str, Venue)], ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    let venues: BTreeMap<&str, Venue> = papers.iter().copied().collect();
    if venues.len() != papers.len() {
        return Err(Error::Split("duplicate paper IDs".into()));
    }
    let n = venues.len();
    let targets = apportion(n, &[ratios.train, ratios.dev, ratios.test]);
    for (split, &t) in Split::ALL.iter().zip(&targets) {
        if ratios.get(*split) > 0.0 && t == 0 {
            return Err(Error::Split(format!(
                "{n} papers are too few: split {split} has a nonzero ratio but gets no paper"
            )));
        }
    }

    let mut ids: Vec<&str> = venues.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let mut assignment = BTreeMap::new();
    let mut rest = Vec::new();
    for id in ids {
        let train_so_far = assignment.len();
        if train_so_far < targets[0] && venues[id] != Venue::NeurIps {
            assignment.insert(id.to_string(), Split::Train);
        } else {
            rest.push(id);
        }
    }
    let n_train = assignment.len();
    let (n_dev, _) = if n_train < targets[0] {
        log::warn!(
            "only {n_train} of {} train papers available after excluding NeurIPS; remainder goes to dev/test",
            targets[0]
        );
        let c = apportion(rest.len(), &[ratios.dev, ratios.test]);
        (c[0], c[1])
    } else {
        (targets[1], targets[2])
    };
    for (i, id) in rest.into_iter().enumerate() {
        let split = if i < n_dev { Split::Dev } else { Split::Test };
        assignment.insert(id.to_string(), split);
    }
    Ok(SplitAssignment {
        seed,
        ratios,
        assignment,
    })
}

pub fn split_corpus(papers: &[PaperDocument], ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    let entries: Vec<(&str, Venue)> = papers.iter().map(|p| (p.paper_id.as_str(), p.venue)).collect();
    split_papers(&entries, ratios, seed)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub papers: usize,
    pub claims: usize,
    pub evidence: usize,
    pub supporting: usize,
    pub supporting_text: usize,
    pub supporting_image: usize,
    pub not_supporting: usize,
    pub not_supporting_text: usize,
    pub not_supporting_image: usize,
    /// Scorer supervision rows: raw score records for train, one soft
    /// label per scored claim for dev and test.
    pub scores: usize,
}

impl std::ops::Add for SplitStats {
    type Output = SplitStats;
    fn add(self, o: SplitStats) -> SplitStats {
        SplitStats {
            papers: self.papers + o.papers,
            claims: self.claims + o.claims,
            evidence: self.evidence + o.evidence,
            supporting: self.supporting + o.supporting,
            supporting_text: self.supporting_text + o.supporting_text,
            supporting_image: self.supporting_image + o.supporting_image,
            not_supporting: self.not_supporting + o.not_supporting,
            not_supporting_text: self.not_supporting_text + o.not_supporting_text,
            not_supporting_image: self.not_supporting_image + o.not_supporting_image,
            scores: self.scores + o.scores,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: SplitStats,
    pub dev: SplitStats,
    pub test: SplitStats,
}

impl DatasetStats {
    pub fn get(&self, split: Split) -> &SplitStats {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut SplitStats {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    pub fn total(&self) -> SplitStats {
        self.train + self.dev + self.test
    }
}

/// Per-split counts of papers, claims, evidence items by kind and
/// consensus, and scorer supervision rows.
pub fn dataset_stats(
    assignment: &SplitAssignment,
    sets: &[ClaimEvidenceSet],
    scores: &[ScoreRecord],
) -> DatasetStats {
    let mut stats = DatasetStats::default();
    for split in assignment.assignment.values() {
        stats.get_mut(*split).papers += 1;
    }
    for set in sets {
        let Some(split) = assignment.split_of(&set.claim.paper_id) else {
            log::warn!("claim {} belongs to an unsplit paper", set.claim.claim_id);
            continue;
        };
        let s = stats.get_mut(split);
        s.claims += 1;
        for item in set.all_items() {
            s.evidence += 1;
            let text = item.kind == EvidenceKind::TextPassage;
            match (item.supporting, text) {
                (true, true) => s.supporting_text += 1,
                (true, false) => s.supporting_image += 1,
                (false, true) => s.not_supporting_text += 1,
                (false, false) => s.not_supporting_image += 1,
            }
            if item.supporting {
                s.supporting += 1;
            } else {
                s.not_supporting += 1;
            }
        }
    }
    let mut scored_claims: BTreeMap<Split, BTreeSet<&str>> = BTreeMap::new();
    for r in scores {
        match assignment.split_of_claim(&r.claim_id) {
            Some(Split::Train) => stats.train.scores += 1,
            Some(split) => {
                scored_claims.entry(split).or_default().insert(&r.claim_id);
            }
            None => log::warn!("score for {} belongs to an unsplit paper", r.claim_id),
        }
    }
    for (split, claims) in scored_claims {
        stats.get_mut(split).scores = claims.len();
    }
    stats
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPair {
    pub claim_id: String,
    pub evidence_id: String,
    pub instruction: String,
    pub claim: String,
    pub document: String,
    pub label: u8,
}

fn sample_negatives<'a, T>(items: &'a [T], cap: Option<usize>, seed: u64, claim_id: &str) -> Vec<&'a T> {
    match cap {
        Some(cap) if items.len() > cap => {
            let digest = io::sha256_hex(claim_id.as_bytes());
            let salt = u64::from_str_radix(&digest[..16], 16).unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
            let mut picked = rand::seq::index::sample(&mut rng, items.len(), cap).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| &items[i]).collect()
        }
        _ => items.iter().collect(),
    }
}

/// One pair per (claim, evidence item) of the split: label 1 for supporting
/// items, 0 for the rest. Visuals are represented by their caption text.
/// `max_negatives` keeps a seeded sample of the non-supporting items.
pub fn export_retrieval_pairs(
    split: Split,
    assignment: &SplitAssignment,
    sets: &[ClaimEvidenceSet],
    max_negatives: Option<usize>,
) -> Vec<RetrievalPair> {
    let mut out = Vec::new();
    for set in sets.iter().filter(|s| assignment.split_of(&s.claim.paper_id) == Some(split)) {
        let negatives = sample_negatives(&set.non_supporting_pool, max_negatives, assignment.seed, &set.claim.claim_id);
        for item in set.items.iter().chain(negatives) {
            out.push(RetrievalPair {
                claim_id: set.claim.claim_id.clone(),
                evidence_id: item.evidence_id.clone(),
                instruction: RETRIEVAL_INSTRUCTION.to_string(),
                claim: set.claim.text().to_string(),
                document: item.text.clone(),
                label: u8::from(item.supporting),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerRecord {
    pub claim_id: String,
    pub system: String,
    pub user: String,
    pub target: String,
    /// Supporting visuals whose images accompany the user message.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub visual_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ScoreContext>,
}

pub fn score_target(score: f64) -> String {
    format!("<score>{score:.3}</score>")
}

fn scorer_user_content(set: &ClaimEvidenceSet) -> String {
    format!("Claim:\n{}\n\nEvidence:\n{}", set.claim.text(), render_evidence(set))
}

/// Train claims give one record per raw score (target: score tag plus the
/// justification); dev and test claims give one record with the soft label.
pub fn export_scorer_records(
    split: Split,
    assignment: &SplitAssignment,
    sets: &[ClaimEvidenceSet],
    records: &[ScoreRecord],
    soft_labels: &[SoftLabel],
) -> Vec<ScorerRecord> {
    let by_claim = crate::scoring::group_by_claim(records);
    let labels: BTreeMap<&str, &SoftLabel> = soft_labels.iter().map(|l| (l.claim_id.as_str(), l)).collect();
    let mut out = Vec::new();
    for set in sets.iter().filter(|s| assignment.split_of(&s.claim.paper_id) == Some(split)) {
        let id = set.claim.claim_id.as_str();
        let user = scorer_user_content(set);
        let visual_ids: Vec<String> = set.items.iter().filter_map(|i| i.visual_id.clone()).collect();
        let base = |target: String| ScorerRecord {
            claim_id: id.to_string(),
            system: SCORER_SYSTEM_PROMPT.to_string(),
            user: user.clone(),
            target,
            visual_ids: visual_ids.clone(),
            annotator_id: None,
            context: None,
        };
        if split == Split::Train {
            for r in by_claim.get(id).into_iter().flatten() {
                let mut rec = base(format!("{}\n{}", score_target(r.score), r.justification));
                rec.annotator_id = Some(r.annotator_id.clone());
                rec.context = Some(r.context.clone());
                out.push(rec);
            }
        } else if let Some(label) = labels.get(id) {
            out.push(base(score_target(label.mean_score)));
        }
    }
    out
}

/// `claim_id evidence_id relevance` lines for every item of the split.
pub fn qrels_text(split: Split, assignment: &SplitAssignment, sets: &[ClaimEvidenceSet]) -> String {
    let mut out = String::new();
    for set in sets.iter().filter(|s| assignment.split_of(&s.claim.paper_id) == Some(split)) {
        for item in set.all_items() {
            out.push_str(&format!("{} {} {}\n", set.claim.claim_id, item.evidence_id, u8::from(item.supporting)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub seed: u64,
    pub ratios: SplitRatios,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_negatives: Option<usize>,
    /// File name -> (row count, SHA-256 of contents).
    pub files: BTreeMap<String, (usize, String)>,
}

/// Writes retrieval pairs, scorer records and qrels for every split into
/// `dir`, plus `manifest.json`.
pub fn write_exports(
    dir: &Path,
    assignment: &SplitAssignment,
    sets: &[ClaimEvidenceSet],
    records: &[ScoreRecord],
    soft_labels: &[SoftLabel],
    max_negatives: Option<usize>,
) -> Result<ExportManifest> {
    let mut files = BTreeMap::new();
    let mut put = |name: String, rows: usize, text: String| -> Result<()> {
        io::write_atomic(&dir.join(&name), text.as_bytes())?;
        files.insert(name, (rows, io::sha256_hex(text.as_bytes())));
        Ok(())
    };
    for split in Split::ALL {
        let pairs = export_retrieval_pairs(split, assignment, sets, max_negatives);
        put(format!("retrieval_{split}.jsonl"), pairs.len(), io::to_jsonl(&pairs)?)?;
        let scorer = export_scorer_records(split, assignment, sets, records, soft_labels);
        put(format!("scorer_{split}.jsonl"), scorer.len(), io::to_jsonl(&scorer)?)?;
        let qrels = qrels_text(split, assignment, sets);
        put(format!("qrels_{split}.txt"), qrels.lines().count(), qrels)?;
    }
    let manifest = ExportManifest {
        seed: assignment.seed,
        ratios: assignment.ratios,
        max_negatives,
        files,
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
