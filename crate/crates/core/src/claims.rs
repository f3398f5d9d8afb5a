//! Own-statement classification of abstract and introduction sentences.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotator::template::{self, Bindings};
use crate::annotator::{AnnotationResult, AnnotationTask, Annotator, Expect, Status};
use crate::corpus::{PaperDocument, SentenceId, SentenceUnit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimLabel {
    OriginalStatement,
    NotOriginalStatement,
}

impl ClaimLabel {
    pub const ALL: [ClaimLabel; 2] = [ClaimLabel::OriginalStatement, ClaimLabel::NotOriginalStatement];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClaimLabel::OriginalStatement => "original_statement",
            ClaimLabel::NotOriginalStatement => "not_original_statement",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for ClaimLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Default for ClaimLabel {
    /// The conservative tie-break: ambiguous sentences are not claims.
    fn default() -> Self {
        ClaimLabel::NotOriginalStatement
    }
}

/// The strictly most frequent label; an exact tie for first place yields
/// `tie_break`.
pub fn majority_vote<'a, L, I>(votes: I, tie_break: &L) -> Result<L>
where
    L: Ord + Clone + 'a,
    I: IntoIterator<Item = &'a L>,
{
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let top = counts.values().copied().max().ok_or(Error::EmptyVotes)?;
    let mut leaders = counts.iter().filter(|(_, &c)| c == top).map(|(l, _)| *l);
    match (leaders.next(), leaders.next()) {
        (Some(only), None) => Ok(only.clone()),
        _ => Ok(tie_break.clone()),
    }
}

pub fn claim_id(paper_id: &str, sentence_id: SentenceId) -> String {
    format!("{paper_id}:{sentence_id}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    pub paper_id: String,
    pub sentence: SentenceUnit,
    pub votes: BTreeMap<String, ClaimLabel>,
    pub consensus_label: ClaimLabel,
}

impl Claim {
    pub fn text(&self) -> &str {
        &self.sentence.text
    }
}

/// An annotator whose answer could not be used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedVote {
    pub annotator_id: String,
    pub status: Status,
    pub detail: String,
}

impl FailedVote {
    pub fn from_result(r: &AnnotationResult) -> Self {
        Self {
            annotator_id: r.annotator_id.clone(),
            status: r.status,
            detail: r.warnings.join("; "),
        }
    }
}

/// Panel outcome for one abstract/introduction sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceVotes {
    pub paper_id: String,
    pub sentence: SentenceUnit,
    pub votes: BTreeMap<String, ClaimLabel>,
    /// Absent when every annotator failed.
    pub consensus_label: Option<ClaimLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailedVote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub paper_id: String,
    pub sentence_id: SentenceId,
    pub message: String,
    pub failures: Vec<FailedVote>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClaimExtraction {
    pub sentence_votes: Vec<SentenceVotes>,
    pub claims: Vec<Claim>,
    pub audit: Vec<AuditEntry>,
}

fn classification_bindings(paper: &PaperDocument, sentence: &SentenceUnit) -> Bindings {
    let mut b = Bindings::new();
    b.insert("ABSTRACT".into(), paper.abstract_text.trim().to_string());
    b.insert("INTRODUCTION".into(), paper.introduction.trim().to_string());
    b.insert("SENTENCE".into(), sentence.text.clone());
    b
}

/// Asks every panel member whether `sentence` is an own statement. Failed
/// annotators are left out of `votes` and listed in `failures`.
pub fn classify_sentence(
    paper: &PaperDocument,
    sentence: &SentenceUnit,
    panel: &[Annotator],
) -> Result<(BTreeMap<String, ClaimLabel>, Vec<FailedVote>)> {
    if !sentence.origin.is_claim_eligible() {
        return Err(Error::Precondition(format!(
            "sentence {} of {} is not from the abstract or introduction",
            sentence.sentence_id, paper.paper_id
        )));
    }
    if panel.is_empty() {
        return Err(Error::Precondition("annotator panel is empty".into()));
    }
    let template = template::own_statement();
    let task = AnnotationTask {
        template: &template,
        bindings: classification_bindings(paper, sentence),
        images: Vec::new(),
        expect: Expect::Label {
            allowed: ClaimLabel::ALL.iter().map(|l| l.as_str().to_string()).collect(),
        },
    };
    let results = panel
        .par_iter()
        .map(|a| a.annotate(&task))
        .collect::<Result<Vec<_>>>()?;

    let mut votes = BTreeMap::new();
    let mut failures = Vec::new();
    for r in &results {
        match r.label().and_then(ClaimLabel::parse) {
            Some(label) => {
                votes.insert(r.annotator_id.clone(), label);
            }
            None => failures.push(FailedVote::from_result(r)),
        }
    }
    Ok((votes, failures))
}

/// Classifies every abstract and introduction sentence and keeps those whose
/// consensus is `original_statement`, in document order.
pub fn extract_claims(
    paper: &PaperDocument,
    panel: &[Annotator],
    tie_break: ClaimLabel,
) -> Result<ClaimExtraction> {
    let candidates: Vec<&SentenceUnit> = paper.claim_candidates().collect();
    let classified = candidates
        .par_iter()
        .map(|s| classify_sentence(paper, s, panel))
        .collect::<Result<Vec<_>>>()?;

    let mut out = ClaimExtraction::default();
    for (sentence, (votes, failures)) in candidates.into_iter().zip(classified) {
        let consensus = if votes.is_empty() {
            None
        } else {
            Some(majority_vote(votes.values(), &tie_break)?)
        };
        if consensus.is_none() {
            log::warn!(
                "{}: every annotator failed on sentence {}; skipped",
                paper.paper_id,
                sentence.sentence_id
            );
            out.audit.push(AuditEntry {
                paper_id: paper.paper_id.clone(),
                sentence_id: sentence.sentence_id,
                message: "all annotators failed".into(),
                failures: failures.clone(),
            });
        }
        if consensus == Some(ClaimLabel::OriginalStatement) {
            out.claims.push(Claim {
                claim_id: claim_id(&paper.paper_id, sentence.sentence_id),
                paper_id: paper.paper_id.clone(),
                sentence: sentence.clone(),
                votes: votes.clone(),
                consensus_label: ClaimLabel::OriginalStatement,
            });
        }
        out.sentence_votes.push(SentenceVotes {
            paper_id: paper.paper_id.clone(),
            sentence: sentence.clone(),
            votes,
            consensus_label: consensus,
            failures,
        });
    }
    Ok(out)
}
