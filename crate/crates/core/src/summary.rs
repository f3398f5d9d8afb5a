//! Corpus-level statistics gathered from stored annotation outputs: panel
//! agreement per setting, leave-one-model-out robustness, and the effect of
//! review context on scores.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::claims::{ClaimLabel, SentenceVotes};
use crate::evidence::{ContextSelections, VisualVotes};
use crate::scoring::{discretise_with, ScoreContext, ScoreRecord};
use crate::stats::{
    context_means, krippendorff_alpha, leave_one_out_agreement, loo_score_shift, mean_pairwise_pearson,
    review_shift_report, AlphaResult, Level, LooShift, ReliabilityMatrix, ShiftReport, DEFAULT_BANDS,
};

/// Agreement between the full-panel consensus and the consensus without
/// one annotator, per annotation setting. `None` where the annotator took
/// no part or fewer than three annotators voted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooAgreementRow {
    pub excluded: String,
    pub own: Option<f64>,
    pub text: Option<f64>,
    pub image: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairwisePearson {
    pub paper_only: Option<f64>,
    pub review_informed: Option<f64>,
    /// Relative change from paper-only to review-informed, in percent.
    pub relative_change_pct: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub claim_alpha: Option<AlphaResult>,
    pub text_alpha: Option<AlphaResult>,
    pub image_alpha: Option<AlphaResult>,
    /// Ordinal alpha over binned scores; units are (claim, context) pairs.
    pub score_alpha: Option<AlphaResult>,
    pub loo_agreement: Vec<LooAgreementRow>,
    pub loo_shifts: Vec<LooShift>,
    pub review_shift: Option<ShiftReport>,
    pub pairwise_pearson: PairwisePearson,
}

/// One vote map per unit for each annotation setting.
#[derive(Debug, Clone, Default)]
pub struct SettingVotes {
    pub own: Vec<BTreeMap<String, ClaimLabel>>,
    pub text: Vec<BTreeMap<String, bool>>,
    pub image: Vec<BTreeMap<String, bool>>,
}

impl SettingVotes {
    pub fn collect(sentences: &[SentenceVotes], text: &[ContextSelections], visuals: &[VisualVotes]) -> Self {
        let own = sentences.iter().map(|s| s.votes.clone()).filter(|v| !v.is_empty()).collect();
        let mut text_units = Vec::new();
        for ctx in text {
            if ctx.selections.is_empty() {
                continue;
            }
            for sid in &ctx.sentence_ids {
                text_units.push(
                    ctx.selections
                        .iter()
                        .map(|(a, picked)| (a.clone(), picked.contains(sid)))
                        .collect(),
                );
            }
        }
        let image = visuals.iter().map(|v| v.votes.clone()).filter(|v| !v.is_empty()).collect();
        Self {
            own,
            text: text_units,
            image,
        }
    }
}

fn voters<L>(units: &[BTreeMap<String, L>]) -> BTreeSet<&str> {
    units.iter().flat_map(|u| u.keys().map(String::as_str)).collect()
}

/// Nominal alpha over annotators' labels; `None` when fewer than two
/// annotators voted or nothing is pairable.
pub fn panel_alpha<L: Ord + Clone>(units: &[BTreeMap<String, L>]) -> Option<AlphaResult> {
    let annotators: Vec<&str> = voters(units).into_iter().collect();
    if annotators.len() < 2 {
        return None;
    }
    let mut codes: BTreeMap<&L, i64> = BTreeMap::new();
    for u in units {
        for l in u.values() {
            let next = codes.len() as i64;
            codes.entry(l).or_insert(next);
        }
    }
    let rows: Vec<Vec<Option<i64>>> = units
        .iter()
        .map(|u| annotators.iter().map(|a| u.get(*a).map(|l| codes[l])).collect())
        .collect();
    let matrix = ReliabilityMatrix::new(
        (0..rows.len()).map(|i| i.to_string()).collect(),
        annotators.iter().map(|a| a.to_string()).collect(),
        rows,
        Level::Nominal,
    )
    .ok()?;
    krippendorff_alpha(&matrix)
        .map_err(|e| log::warn!("alpha undefined: {e}"))
        .ok()
}

fn loo_alpha<L: Ord + Clone>(units: &[BTreeMap<String, L>], excluded: &str, tie_break: &L) -> Option<f64> {
    let v = voters(units);
    if !v.contains(excluded) || v.len() < 3 {
        return None;
    }
    leave_one_out_agreement(units, excluded, tie_break)
        .map_err(|e| log::warn!("leave-one-out agreement without {excluded} undefined: {e}"))
        .ok()
        .map(|a| a.alpha)
}

/// Ordinal alpha over binned scores, one unit per (claim, context).
pub fn score_alpha(records: &[ScoreRecord], edges: &[f64]) -> Option<AlphaResult> {
    let mut units: BTreeMap<(&str, &ScoreContext), BTreeMap<String, i64>> = BTreeMap::new();
    for r in records {
        let bin = discretise_with(r.score, edges).ok()?;
        units
            .entry((r.claim_id.as_str(), &r.context))
            .or_default()
            .insert(r.annotator_id.clone(), i64::from(bin));
    }
    let units: Vec<BTreeMap<String, i64>> = units.into_values().collect();
    let annotators: Vec<&str> = voters(&units).into_iter().collect();
    if annotators.len() < 2 {
        return None;
    }
    let rows = units
        .iter()
        .map(|u| annotators.iter().map(|a| u.get(*a).copied()).collect())
        .collect();
    let matrix = ReliabilityMatrix::new(
        (0..units.len()).map(|i| i.to_string()).collect(),
        annotators.iter().map(|a| a.to_string()).collect(),
        rows,
        Level::Ordinal,
    )
    .ok()?;
    krippendorff_alpha(&matrix).ok()
}

/// Computes every summary statistic. `annotators` fixes the row order of
/// the leave-one-out tables.
pub fn summarize(
    annotators: &[String],
    votes: &SettingVotes,
    records: &[ScoreRecord],
    tie_break: ClaimLabel,
    edges: &[f64],
) -> StatsSummary {
    let loo_agreement = annotators
        .iter()
        .map(|a| LooAgreementRow {
            excluded: a.clone(),
            own: loo_alpha(&votes.own, a, &tie_break),
            text: loo_alpha(&votes.text, a, &false),
            image: loo_alpha(&votes.image, a, &false),
        })
        .collect();
    let loo_shifts = annotators
        .iter()
        .filter(|a| records.iter().any(|r| &r.annotator_id == *a))
        .filter_map(|a| {
            loo_score_shift(records, a)
                .map_err(|e| log::warn!("score shift without {a} undefined: {e}"))
                .ok()
        })
        .collect();
    let (paper, review) = context_means(records);
    let review_shift = if paper.is_empty() {
        None
    } else {
        review_shift_report(&paper, &review, &DEFAULT_BANDS).ok()
    };
    let paper_only = mean_pairwise_pearson(records, |c| *c == ScoreContext::PaperOnly);
    let review_informed = mean_pairwise_pearson(records, |c| *c != ScoreContext::PaperOnly);
    let relative_change_pct = match (paper_only, review_informed) {
        (Some(p), Some(r)) if p != 0.0 => Some(100.0 * (r - p) / p.abs()),
        _ => None,
    };
    StatsSummary {
        claim_alpha: panel_alpha(&votes.own),
        text_alpha: panel_alpha(&votes.text),
        image_alpha: panel_alpha(&votes.image),
        score_alpha: score_alpha(records, edges),
        loo_agreement,
        loo_shifts,
        review_shift,
        pairwise_pearson: PairwisePearson {
            paper_only,
            review_informed,
            relative_change_pct,
        },
    }
}
