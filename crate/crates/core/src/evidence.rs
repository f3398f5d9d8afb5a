//! Evidence collection: numbered body chunks under a token budget, panel
//! sentence selections, visual relevance votes, and majority-vote merging of
//! supporting sentences into passages.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotator::template::{self, Bindings};
use crate::annotator::{AnnotationTask, Annotator, Expect, Status};
use crate::claims::{Claim, FailedVote};
use crate::corpus::{PaperDocument, SentenceId, VisualItem, VisualKind};
use crate::error::{Error, Result};

pub const DEFAULT_TOKEN_BUDGET: usize = 1000;

const RELEVANT: &str = "relevant";
const NOT_RELEVANT: &str = "not_relevant";

/// Tokenizer-free estimate: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn numbered_line(id: SentenceId, text: &str) -> String {
    format!("{id}. {text}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceContext {
    pub claim_id: String,
    pub chunk_index: usize,
    pub sentence_ids: Vec<SentenceId>,
    pub rendered_numbered_text: String,
    pub token_estimate: usize,
    /// A single sentence that alone exceeds the budget.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oversized: bool,
}

/// Greedily packs body sentences, in order, into numbered blocks whose
/// token estimate stays within `budget`. The chunks do not depend on the
/// claim, so their prompts differ across claims only in the claim slot.
pub fn chunk_body(paper: &PaperDocument, budget: usize) -> Vec<EvidenceContext> {
    let mut chunks: Vec<EvidenceContext> = Vec::new();
    let mut ids: Vec<SentenceId> = Vec::new();
    let mut lines: Vec<String> = Vec::new();

    let flush = |ids: &mut Vec<SentenceId>, lines: &mut Vec<String>, chunks: &mut Vec<EvidenceContext>| {
        if ids.is_empty() {
            return;
        }
        let text = lines.join("\n");
        let tokens = estimate_tokens(&text);
        let oversized = tokens > budget;
        if oversized {
            log::warn!(
                "{}: sentence {} alone is ~{tokens} tokens, over the budget of {budget}",
                paper.paper_id,
                ids[0]
            );
        }
        chunks.push(EvidenceContext {
            claim_id: String::new(),
            chunk_index: chunks.len(),
            sentence_ids: std::mem::take(ids),
            rendered_numbered_text: text,
            token_estimate: tokens,
            oversized,
        });
        lines.clear();
    };

    for s in paper.body_sentences() {
        let line = numbered_line(s.sentence_id, &s.text);
        if !ids.is_empty() {
            let joined_len: usize =
                lines.iter().map(|l| l.chars().count() + 1).sum::<usize>() + line.chars().count();
            if joined_len.div_ceil(4) > budget {
                flush(&mut ids, &mut lines, &mut chunks);
            }
        }
        ids.push(s.sentence_id);
        lines.push(line);
    }
    flush(&mut ids, &mut lines, &mut chunks);
    chunks
}

/// The body chunks labelled with `claim`'s ID.
pub fn build_contexts(paper: &PaperDocument, claim: &Claim, budget: usize) -> Vec<EvidenceContext> {
    chunk_body(paper, budget)
        .into_iter()
        .map(|mut c| {
            c.claim_id = claim.claim_id.clone();
            c
        })
        .collect()
}

/// Per-annotator sentence selections for one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSelections {
    pub claim_id: String,
    pub chunk_index: usize,
    pub sentence_ids: Vec<SentenceId>,
    pub selections: BTreeMap<String, Vec<SentenceId>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailedVote>,
}

/// Per-annotator relevance votes for one visual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualVotes {
    pub claim_id: String,
    pub visual_id: String,
    pub votes: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailedVote>,
}

pub fn annotate_text_evidence(
    claim: &Claim,
    context: &EvidenceContext,
    panel: &[Annotator],
) -> Result<ContextSelections> {
    let template = template::text_evidence();
    let mut bindings = Bindings::new();
    bindings.insert("CLAIM".into(), claim.text().to_string());
    bindings.insert("NUMBERED SENTENCES".into(), context.rendered_numbered_text.clone());
    let task = AnnotationTask {
        template: &template,
        bindings,
        images: Vec::new(),
        expect: Expect::SentenceNumbers {
            valid_ids: context.sentence_ids.iter().copied().collect(),
        },
    };
    let results = panel
        .par_iter()
        .map(|a| a.annotate(&task))
        .collect::<Result<Vec<_>>>()?;

    let mut selections = BTreeMap::new();
    let mut failures = Vec::new();
    for r in &results {
        match r.sentence_ids() {
            Some(ids) => {
                selections.insert(r.annotator_id.clone(), ids.to_vec());
            }
            None => failures.push(FailedVote::from_result(r)),
        }
    }
    Ok(ContextSelections {
        claim_id: claim.claim_id.clone(),
        chunk_index: context.chunk_index,
        sentence_ids: context.sentence_ids.clone(),
        selections,
        failures,
    })
}

fn visual_bindings(claim: &Claim, visual: &VisualItem) -> Bindings {
    let image_text = visual
        .extracted_text
        .as_deref()
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .unwrap_or("(none)");
    let mut b = Bindings::new();
    b.insert("CLAIM".into(), claim.text().to_string());
    b.insert("FIG_TYPE".into(), visual.kind.as_str().to_string());
    b.insert("CAPTION".into(), visual.caption.trim().to_string());
    b.insert("IMAGE_TEXT".into(), image_text.to_string());
    b
}

/// Relevance votes from the vision members of `panel`. Visuals without an
/// image file are judged from caption and extracted text alone; an image
/// file that cannot be read makes each annotator a recorded failure.
pub fn annotate_visual_evidence(
    claim: &Claim,
    visual: &VisualItem,
    panel: &[Annotator],
) -> Result<VisualVotes> {
    let vision: Vec<&Annotator> = panel.iter().filter(|a| a.is_vision()).collect();
    if vision.is_empty() {
        return Err(Error::Precondition("no vision-capable annotator in the panel".into()));
    }
    let template = template::visual_evidence();
    let task = AnnotationTask {
        template: &template,
        bindings: visual_bindings(claim, visual),
        images: visual.image_ref.iter().cloned().collect(),
        expect: Expect::Label {
            allowed: vec![RELEVANT.into(), NOT_RELEVANT.into()],
        },
    };
    let outcomes: Vec<_> = vision.par_iter().map(|a| (a.id(), a.annotate(&task))).collect();

    let mut votes = BTreeMap::new();
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(r) => match r.label() {
                Some(l) => {
                    votes.insert(id.to_string(), l == RELEVANT);
                }
                None => failures.push(FailedVote::from_result(&r)),
            },
            Err(e @ Error::ImagePayload { .. }) => {
                log::warn!("{id}: skipped on {}: {e}", visual.visual_id);
                failures.push(FailedVote {
                    annotator_id: id.to_string(),
                    status: Status::TransportFailed,
                    detail: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(VisualVotes {
        claim_id: claim.claim_id.clone(),
        visual_id: visual.visual_id.clone(),
        votes,
        failures,
    })
}

/// True iff more than half of the cast votes are `true`.
pub fn strict_majority(votes: &BTreeMap<String, bool>) -> bool {
    2 * votes.values().filter(|&&v| v).count() > votes.len()
}

/// Maximal runs of `ids` in which neighbours are at most `gap` IDs apart,
/// as inclusive `(start, end)` pairs.
pub fn merge_runs(ids: &BTreeSet<SentenceId>, gap: u32) -> Vec<(SentenceId, SentenceId)> {
    let mut runs: Vec<(SentenceId, SentenceId)> = Vec::new();
    for &id in ids {
        match runs.last_mut() {
            Some((_, end)) if id - *end <= gap + 1 => *end = id,
            _ => runs.push((id, id)),
        }
    }
    runs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    TextPassage,
    Figure,
    Table,
}

impl From<VisualKind> for EvidenceKind {
    fn from(k: VisualKind) -> Self {
        match k {
            VisualKind::Figure => EvidenceKind::Figure,
            VisualKind::Table => EvidenceKind::Table,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub evidence_id: String,
    pub claim_id: String,
    pub kind: EvidenceKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sentence_ids: Vec<SentenceId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual_id: Option<String>,
    /// Passage text, or a visual's caption plus extracted text.
    pub text: String,
    pub votes: BTreeMap<String, bool>,
    pub supporting: bool,
}

impl EvidenceItem {
    pub fn is_visual(&self) -> bool {
        self.visual_id.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimEvidenceSet {
    pub claim: Claim,
    pub items: Vec<EvidenceItem>,
    pub non_supporting_pool: Vec<EvidenceItem>,
}

impl ClaimEvidenceSet {
    pub fn all_items(&self) -> impl Iterator<Item = &EvidenceItem> {
        self.items.iter().chain(&self.non_supporting_pool)
    }
}

fn passage_item(
    paper: &PaperDocument,
    claim_id: &str,
    (start, end): (SentenceId, SentenceId),
    selections: &BTreeMap<String, Vec<SentenceId>>,
) -> EvidenceItem {
    let votes: BTreeMap<String, bool> = selections
        .iter()
        .map(|(a, ids)| (a.clone(), ids.iter().any(|id| (start..=end).contains(id))))
        .collect();
    let text = (start..=end)
        .filter_map(|id| paper.sentence(id))
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    EvidenceItem {
        evidence_id: format!("{claim_id}:s{start}-{end}"),
        claim_id: claim_id.to_string(),
        kind: EvidenceKind::TextPassage,
        sentence_ids: (start..=end).collect(),
        visual_id: None,
        text,
        supporting: strict_majority(&votes),
        votes,
    }
}

/// Supporting sentences are those chosen by a strict majority of the
/// annotators that answered for their context. Supporting runs (neighbours
/// at most `merge_gap` apart, within one context) become passages; every
/// other body sentence becomes a one-sentence non-supporting item. Each
/// visual becomes one item decided by its vision votes.
pub fn aggregate_and_merge(
    paper: &PaperDocument,
    claim: &Claim,
    contexts: &[ContextSelections],
    visuals: &[VisualVotes],
    merge_gap: u32,
) -> ClaimEvidenceSet {
    let mut items = Vec::new();
    let mut pool = Vec::new();

    for ctx in contexts {
        let n_voters = ctx.selections.len();
        let mut counts: BTreeMap<SentenceId, usize> = BTreeMap::new();
        for ids in ctx.selections.values() {
            for &id in ids {
                *counts.entry(id).or_default() += 1;
            }
        }
        let supporting: BTreeSet<SentenceId> = counts
            .into_iter()
            .filter(|&(_, c)| 2 * c > n_voters)
            .map(|(id, _)| id)
            .collect();
        let runs = merge_runs(&supporting, merge_gap);
        let covered: BTreeSet<SentenceId> = runs.iter().flat_map(|&(s, e)| s..=e).collect();
        for &run in &runs {
            items.push(passage_item(paper, &claim.claim_id, run, &ctx.selections));
        }
        for &id in &ctx.sentence_ids {
            if !covered.contains(&id) {
                pool.push(passage_item(paper, &claim.claim_id, (id, id), &ctx.selections));
            }
        }
    }

    for v in visuals {
        let Some(visual) = paper.visuals.iter().find(|x| x.visual_id == v.visual_id) else {
            log::warn!("{}: votes for unknown visual {}", paper.paper_id, v.visual_id);
            continue;
        };
        let item = EvidenceItem {
            evidence_id: format!("{}:v{}", claim.claim_id, visual.visual_id),
            claim_id: claim.claim_id.clone(),
            kind: visual.kind.into(),
            sentence_ids: Vec::new(),
            visual_id: Some(visual.visual_id.clone()),
            text: visual.text_surrogate(),
            votes: v.votes.clone(),
            supporting: strict_majority(&v.votes),
        };
        if item.supporting {
            items.push(item);
        } else {
            pool.push(item);
        }
    }

    ClaimEvidenceSet {
        claim: claim.clone(),
        items,
        non_supporting_pool: pool,
    }
}

#[derive(Debug, Clone)]
pub struct EvidenceOptions {
    pub budget: usize,
    pub merge_gap: u32,
}

impl Default for EvidenceOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_TOKEN_BUDGET,
            merge_gap: 0,
        }
    }
}

/// Everything produced while collecting one claim's evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimEvidenceRun {
    pub set: ClaimEvidenceSet,
    pub text_votes: Vec<ContextSelections>,
    pub visual_votes: Vec<VisualVotes>,
}

/// Runs the text panel over every body chunk and the vision panel over every
/// visual, then aggregates.
pub fn collect_evidence(
    paper: &PaperDocument,
    claim: &Claim,
    panel: &[Annotator],
    options: &EvidenceOptions,
) -> Result<ClaimEvidenceRun> {
    let contexts = build_contexts(paper, claim, options.budget);
    let text_votes = contexts
        .par_iter()
        .map(|c| annotate_text_evidence(claim, c, panel))
        .collect::<Result<Vec<_>>>()?;
    let has_vision = panel.iter().any(Annotator::is_vision);
    let visual_votes = if has_vision {
        paper
            .visuals
            .par_iter()
            .map(|v| annotate_visual_evidence(claim, v, panel))
            .collect::<Result<Vec<_>>>()?
    } else {
        if !paper.visuals.is_empty() {
            log::warn!("{}: no vision annotators; visuals left unjudged", paper.paper_id);
        }
        Vec::new()
    };
    let set = aggregate_and_merge(paper, claim, &text_votes, &visual_votes, options.merge_gap);
    Ok(ClaimEvidenceRun {
        set,
        text_votes,
        visual_votes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::ClaimLabel;
    use crate::corpus::{Origin, RuleSegmenter, SentenceUnit};
    use proptest::prelude::*;
    use std::path::Path;

    fn paper(n_body: usize, words: usize) -> PaperDocument {
        let sentence = |i: usize| {
            let mut s = format!("Sentence {i}");
            for _ in 0..words {
                s.push_str(" word");
            }
            s.push('.');
            s
        };
        paper_from((0..n_body).map(sentence).collect())
    }

    fn paper_from(body: Vec<String>) -> PaperDocument {
        let sections = if body.is_empty() {
            "[]".to_string()
        } else {
            serde_json::json!([{"section_id": "s1", "title": "Body", "text": body.join(" ")}]).to_string()
        };
        let json = format!(
            r#"{{"paper_id": "p", "venue": "ICLR", "abstract": "We show X.", "introduction": "Intro here.",
                "sections": {sections},
                "visuals": [{{"visual_id": "fig1", "kind": "figure", "caption": "A plot."}}],
                "reviews": [], "reviewer_overall_scores": []}}"#
        );
        PaperDocument::from_json(&json, Path::new("p.json"), &RuleSegmenter::default()).unwrap()
    }

    fn claim() -> Claim {
        Claim {
            claim_id: "p:0".into(),
            paper_id: "p".into(),
            sentence: SentenceUnit {
                sentence_id: 0,
                text: "We show X.".into(),
                origin: Origin::Abstract,
            },
            votes: BTreeMap::new(),
            consensus_label: ClaimLabel::OriginalStatement,
        }
    }

    fn brute_runs(ids: &BTreeSet<u32>) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for &id in ids {
            if id == 0 || !ids.contains(&(id - 1)) {
                let mut end = id;
                while ids.contains(&(end + 1)) {
                    end += 1;
                }
                out.push((id, end));
            }
        }
        out
    }

    #[test]
    fn estimator() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
    }

    #[test]
    fn generous_budget_gives_one_chunk() {
        let p = paper(30, 2);
        let chunks = chunk_body(&p, 100_000);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].sentence_ids, (2..32).collect::<Vec<_>>());
        assert!(chunks[0].rendered_numbered_text.starts_with("2. Sentence 0 word word."));
    }

    #[test]
    fn budget_forces_three_chunks() {
        // Body IDs run 2..=31; every numbered line is padded to 40 chars.
        // Ten lines joined: 409 chars = 103 tokens; eleven: 450 chars = 113.
        let body = (2..32)
            .map(|id: usize| {
                let width = 40 - format!("{id}. ").len();
                format!("A{}.", "a".repeat(width - 2))
            })
            .collect();
        let p = paper_from(body);
        assert!(p.body_sentences().all(|s| numbered_line(s.sentence_id, &s.text).len() == 40));
        let budget = 103;
        let chunks = chunk_body(&p, budget);
        assert_eq!(chunks.len(), 3);
        let union: Vec<u32> = chunks.iter().flat_map(|c| c.sentence_ids.clone()).collect();
        assert_eq!(union, (2..32).collect::<Vec<_>>());
        assert!(chunks.iter().all(|c| c.token_estimate <= budget && !c.oversized));
    }

    #[test]
    fn empty_body_and_oversize() {
        assert!(chunk_body(&paper(0, 1), 100).is_empty());
        let chunks = chunk_body(&paper(3, 40), 10);
        assert_eq!(chunks.len(), 3);
        assert!(chunks.iter().all(|c| c.oversized && c.sentence_ids.len() == 1));
    }

    #[test]
    fn merge_examples() {
        let ids: BTreeSet<u32> = [3, 4, 5, 9].into();
        assert_eq!(merge_runs(&ids, 0), vec![(3, 5), (9, 9)]);
        assert_eq!(merge_runs(&BTreeSet::new(), 0), vec![]);
        assert_eq!(merge_runs(&[3, 5].into(), 1), vec![(3, 5)]);
    }

    fn selections(spec: &[(&str, &[u32])]) -> BTreeMap<String, Vec<u32>> {
        spec.iter().map(|(a, ids)| (a.to_string(), ids.to_vec())).collect()
    }

    #[test]
    fn strict_majority_required() {
        let p = paper(6, 1);
        let c = claim();
        let ctx = ContextSelections {
            claim_id: c.claim_id.clone(),
            chunk_index: 0,
            sentence_ids: (2..8).collect(),
            selections: selections(&[
                ("a", &[3, 4, 5]),
                ("b", &[3, 4, 5]),
                ("c", &[3, 4, 5, 7]),
                ("d", &[7]),
                ("e", &[]),
                ("f", &[7]),
                ("g", &[7]),
                ("h", &[3]),
            ]),
            failures: vec![],
        };
        let set = aggregate_and_merge(&p, &c, &[ctx], &[], 0);
        // 3 has 4 of 8 votes (not a strict majority); 7 has 4 of 8 too.
        assert!(set.items.is_empty());
        assert_eq!(set.non_supporting_pool.len(), 6);
    }

    #[test]
    fn passages_and_visuals() {
        let p = paper(8, 1);
        let c = claim();
        let ctx = ContextSelections {
            claim_id: c.claim_id.clone(),
            chunk_index: 0,
            sentence_ids: (2..10).collect(),
            selections: selections(&[("a", &[3, 4, 5, 9]), ("b", &[3, 4, 5, 9]), ("c", &[4])]),
            failures: vec![],
        };
        let vis = VisualVotes {
            claim_id: c.claim_id.clone(),
            visual_id: "fig1".into(),
            votes: [("a", true), ("b", true), ("c", false), ("d", true), ("e", false)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            failures: vec![],
        };
        let set = aggregate_and_merge(&p, &c, &[ctx], &[vis], 0);
        let ids: Vec<&str> = set.items.iter().map(|i| i.evidence_id.as_str()).collect();
        assert_eq!(ids, vec!["p:0:s3-5", "p:0:s9-9", "p:0:vfig1"]);
        assert_eq!(set.items[0].text, "Sentence 1 word. Sentence 2 word. Sentence 3 word.");
        assert_eq!(set.non_supporting_pool.len(), 4);
        for item in set.all_items() {
            assert_eq!(item.supporting, strict_majority(&item.votes));
        }
    }

    proptest! {
        #[test]
        fn merge_matches_brute_force(ids in prop::collection::btree_set(0u32..60, 0..40)) {
            prop_assert_eq!(merge_runs(&ids, 0), brute_runs(&ids));
        }

        #[test]
        fn chunks_partition_body(n in 0usize..40, words in 0usize..30, budget in 5usize..300) {
            let p = paper(n, words);
            let chunks = chunk_body(&p, budget);
            let union: Vec<u32> = chunks.iter().flat_map(|c| c.sentence_ids.clone()).collect();
            let body: Vec<u32> = p.body_sentences().map(|s| s.sentence_id).collect();
            prop_assert_eq!(union, body);
            for c in &chunks {
                prop_assert_eq!(c.token_estimate, estimate_tokens(&c.rendered_numbered_text));
                prop_assert!(c.token_estimate <= budget || (c.oversized && c.sentence_ids.len() == 1));
            }
        }

        #[test]
        fn supporting_is_monotone(
            sel in prop::collection::vec(prop::collection::btree_set(2u32..12, 0..10), 1..8),
            extra_voter in 0usize..8,
            extra_id in 2u32..12,
        ) {
            let p = paper(10, 1);
            let c = claim();
            let mut selections: BTreeMap<String, Vec<u32>> = sel
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("a{i}"), s.iter().copied().collect()))
                .collect();
            let ctx = |s: &BTreeMap<String, Vec<u32>>| ContextSelections {
                claim_id: c.claim_id.clone(), chunk_index: 0, sentence_ids: (2..12).collect(),
                selections: s.clone(), failures: vec![],
            };
            let supported = |set: &ClaimEvidenceSet| -> BTreeSet<u32> {
                set.items.iter().flat_map(|i| i.sentence_ids.clone()).collect()
            };
            let before = supported(&aggregate_and_merge(&p, &c, &[ctx(&selections)], &[], 0));
            let key = format!("a{}", extra_voter % sel.len());
            let list = selections.get_mut(&key).unwrap();
            if !list.contains(&extra_id) {
                list.push(extra_id);
                list.sort();
            }
            let after = supported(&aggregate_and_merge(&p, &c, &[ctx(&selections)], &[], 0));
            prop_assert!(before.is_subset(&after));
        }
    }
}
