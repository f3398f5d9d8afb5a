//! Overstatement scoring of claim-evidence sets, soft labels, and the
//! five-bin ordinal scale.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotator::template::{self, Bindings};
use crate::annotator::{AnnotationTask, Annotator, Expect};
use crate::claims::FailedVote;
use crate::corpus::PaperDocument;
use crate::error::{Error, Result};
use crate::evidence::{ClaimEvidenceSet, EvidenceItem, EvidenceKind};

/// Inner edges of the five equal-width bins over [0, 1].
pub const DEFAULT_BIN_EDGES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

const NO_EVIDENCE: &str = "(no supporting evidence was found in the paper)";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreContext {
    PaperOnly,
    Review(String),
}

impl ScoreContext {
    pub fn review_id(&self) -> Option<&str> {
        match self {
            ScoreContext::PaperOnly => None,
            ScoreContext::Review(id) => Some(id),
        }
    }
}

impl fmt::Display for ScoreContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreContext::PaperOnly => f.write_str("paper_only"),
            ScoreContext::Review(id) => write!(f, "review:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub claim_id: String,
    pub annotator_id: String,
    pub context: ScoreContext,
    pub score: f64,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    pub claim_id: String,
    pub mean_score: f64,
    pub n_records: usize,
    pub ordinal_bin: u8,
}

/// Text for the prompt's evidence slot: supporting passages in document
/// order, then supporting visuals in the order they were collected.
pub fn render_evidence(set: &ClaimEvidenceSet) -> String {
    let (mut text, visuals): (Vec<&EvidenceItem>, Vec<&EvidenceItem>) =
        set.items.iter().partition(|i| !i.is_visual());
    text.sort_by_key(|i| i.sentence_ids.first().copied());

    let mut blocks = Vec::new();
    for item in text {
        let (first, last) = (item.sentence_ids[0], item.sentence_ids[item.sentence_ids.len() - 1]);
        let span = if first == last {
            format!("sentence {first}")
        } else {
            format!("sentences {first}-{last}")
        };
        blocks.push(format!("Text ({span}): {}", item.text));
    }
    for item in visuals {
        let kind = match item.kind {
            EvidenceKind::Table => "Table",
            _ => "Figure",
        };
        let id = item.visual_id.as_deref().unwrap_or_default();
        blocks.push(format!("{kind} {id}: {}", item.text));
    }
    if blocks.is_empty() {
        NO_EVIDENCE.to_string()
    } else {
        blocks.join("\n\n")
    }
}

fn evidence_images(paper: &PaperDocument, set: &ClaimEvidenceSet) -> Vec<PathBuf> {
    paper
        .visuals
        .iter()
        .filter(|v| set.items.iter().any(|i| i.visual_id.as_ref() == Some(&v.visual_id)))
        .filter_map(|v| v.image_ref.clone())
        .collect()
}

/// One annotator's score under one context. `Ok(Err(_))` is an annotation
/// failure (transport or unparseable after retries), which callers log and
/// skip; `Err` is a caller error such as an unknown review.
pub fn score_claim(
    paper: &PaperDocument,
    set: &ClaimEvidenceSet,
    annotator: &Annotator,
    context: &ScoreContext,
) -> Result<Result<ScoreRecord, FailedVote>> {
    let mut bindings = Bindings::new();
    bindings.insert("CLAIM".into(), set.claim.text().to_string());
    bindings.insert("EVIDENCE".into(), render_evidence(set));
    if let Some(review_id) = context.review_id() {
        let review = paper.review(review_id).ok_or_else(|| {
            Error::Precondition(format!("paper {} has no review {review_id}", paper.paper_id))
        })?;
        bindings.insert("REVIEW".into(), review.text.trim().to_string());
    }
    let images = if annotator.is_vision() {
        evidence_images(paper, set)
    } else {
        Vec::new()
    };
    let template = template::overstatement();
    let task = AnnotationTask {
        template: &template,
        bindings,
        images,
        expect: Expect::Score,
    };
    let result = match annotator.annotate(&task) {
        Ok(r) => r,
        Err(e @ Error::ImagePayload { .. }) => {
            return Ok(Err(FailedVote {
                annotator_id: annotator.id().to_string(),
                status: crate::annotator::Status::TransportFailed,
                detail: e.to_string(),
            }))
        }
        Err(e) => return Err(e),
    };
    Ok(match result.score() {
        Some((score, justification)) => Ok(ScoreRecord {
            claim_id: set.claim.claim_id.clone(),
            annotator_id: annotator.id().to_string(),
            context: context.clone(),
            score,
            justification: justification.to_string(),
        }),
        None => {
            log::warn!(
                "{}: no score for {} ({context}): {:?}",
                annotator.id(),
                set.claim.claim_id,
                result.status
            );
            Err(FailedVote::from_result(&result))
        }
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutcome {
    pub records: Vec<ScoreRecord>,
    pub failures: Vec<(ScoreContext, FailedVote)>,
}

/// Every panel member scores the claim paper-only and once per review.
/// Records come back in panel order, paper-only first, then reviews in
/// paper order.
pub fn score_all(paper: &PaperDocument, set: &ClaimEvidenceSet, panel: &[Annotator]) -> Result<ScoreOutcome> {
    let contexts: Vec<ScoreContext> = std::iter::once(ScoreContext::PaperOnly)
        .chain(paper.reviews.iter().map(|r| ScoreContext::Review(r.review_id.clone())))
        .collect();
    let jobs: Vec<(&Annotator, &ScoreContext)> = panel
        .iter()
        .flat_map(|a| contexts.iter().map(move |c| (a, c)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|(a, c)| score_claim(paper, set, a, c))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ScoreOutcome::default();
    for ((_, ctx), r) in jobs.iter().zip(results) {
        match r {
            Ok(record) => out.records.push(record),
            Err(f) => out.failures.push(((*ctx).clone(), f)),
        }
    }
    Ok(out)
}

/// Mean of `scores`, independent of their order down to the last bit, and
/// exactly `s` when every score equals `s`.
pub fn stable_mean(scores: &[f64]) -> Option<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pivot = *sorted.first()?;
    let offset: f64 = sorted.iter().map(|x| x - pivot).sum();
    Some(pivot + offset / sorted.len() as f64)
}

/// Ordinal bin 1..=edges.len()+1 with half-open bins and a closed top bin.
pub fn discretise_with(score: f64, edges: &[f64]) -> Result<u8> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::ScoreOutOfRange(score));
    }
    Ok(1 + edges.iter().filter(|&&e| e <= score).count() as u8)
}

pub fn discretise(score: f64) -> Result<u8> {
    discretise_with(score, &DEFAULT_BIN_EDGES)
}

pub fn soft_label_with(records: &[ScoreRecord], edges: &[f64]) -> Result<SoftLabel> {
    let first = records.first().ok_or(Error::EmptyVotes)?;
    if let Some(other) = records.iter().find(|r| r.claim_id != first.claim_id) {
        return Err(Error::Precondition(format!(
            "soft label over mixed claims {} and {}",
            first.claim_id, other.claim_id
        )));
    }
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let mean = stable_mean(&scores).unwrap_or_default().clamp(0.0, 1.0);
    Ok(SoftLabel {
        claim_id: first.claim_id.clone(),
        mean_score: mean,
        n_records: records.len(),
        ordinal_bin: discretise_with(mean, edges)?,
    })
}

/// Unweighted mean over all records of one claim, paper-only and
/// review-informed alike.
pub fn soft_label(records: &[ScoreRecord]) -> Result<SoftLabel> {
    soft_label_with(records, &DEFAULT_BIN_EDGES)
}

pub fn group_by_claim(records: &[ScoreRecord]) -> BTreeMap<&str, Vec<ScoreRecord>> {
    let mut groups: BTreeMap<&str, Vec<ScoreRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.claim_id.as_str()).or_default().push(r.clone());
    }
    groups
}

/// One soft label per claim, ordered by claim ID.
pub fn soft_labels(records: &[ScoreRecord], edges: &[f64]) -> Result<Vec<SoftLabel>> {
    group_by_claim(records)
        .values()
        .map(|rs| soft_label_with(rs, edges))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(claim: &str, score: f64) -> ScoreRecord {
        ScoreRecord {
            claim_id: claim.into(),
            annotator_id: "a".into(),
            context: ScoreContext::PaperOnly,
            score,
            justification: "j".into(),
        }
    }

    #[test]
    fn soft_label_examples() {
        let l = soft_label(&[rec("c", 0.2), rec("c", 0.4)]).unwrap();
        assert!((l.mean_score - 0.3).abs() < 1e-15);
        assert_eq!(l.n_records, 2);
        assert_eq!(l.ordinal_bin, 2);
        assert_eq!(soft_label(&[rec("c", 0.85)]).unwrap().mean_score, 0.85);
        assert!(matches!(soft_label(&[]), Err(Error::EmptyVotes)));
        assert!(soft_label(&[rec("c", 0.1), rec("d", 0.1)]).is_err());
    }

    #[test]
    fn thirty_two_scores_match_resummation() {
        let records: Vec<ScoreRecord> = (0..32).map(|i| rec("c", (i as f64 * 0.37).fract())).collect();
        let oracle: f64 = records.iter().map(|r| r.score).sum::<f64>() / 32.0;
        assert!((soft_label(&records).unwrap().mean_score - oracle).abs() < 1e-12);
    }

    #[test]
    fn bins() {
        let eps = 1e-12;
        let cases = [
            (0.0, 1),
            (0.2 - eps, 1),
            (0.2, 2),
            (0.4 - eps, 2),
            (0.4, 3),
            (0.6 - eps, 3),
            (0.6, 4),
            (0.8 - eps, 4),
            (0.8, 5),
            (1.0, 5),
        ];
        for (s, b) in cases {
            assert_eq!(discretise(s).unwrap(), b, "{s}");
        }
        assert!(discretise(-0.01).is_err());
        assert!(discretise(1.01).is_err());
        assert!(discretise(f64::NAN).is_err());
    }

    #[test]
    fn context_serialization() {
        assert_eq!(serde_json::to_string(&ScoreContext::PaperOnly).unwrap(), "\"paper_only\"");
        assert_eq!(
            serde_json::to_string(&ScoreContext::Review("r1".into())).unwrap(),
            r#"{"review":"r1"}"#
        );
    }

    proptest! {
        #[test]
        fn discretise_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(discretise(lo).unwrap() <= discretise(hi).unwrap());
        }

        #[test]
        fn identical_scores_average_exactly(s in 0.0f64..=1.0, k in 1usize..64) {
            let records: Vec<_> = (0..k).map(|_| rec("c", s)).collect();
            prop_assert_eq!(soft_label(&records).unwrap().mean_score, s);
        }

        #[test]
        fn soft_label_is_permutation_invariant(scores in prop::collection::vec(0.0f64..=1.0, 1..40), rot in 0usize..40) {
            let records: Vec<_> = scores.iter().map(|&s| rec("c", s)).collect();
            let mut permuted = records.clone();
            permuted.reverse();
            let r = rot % permuted.len();
            permuted.rotate_left(r);
            let a = soft_label(&records).unwrap().mean_score;
            let b = soft_label(&permuted).unwrap().mean_score;
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
