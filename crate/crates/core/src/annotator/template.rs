//! Prompt templates with named placeholders.
//!
//! Placeholders are upper-case names in braces (`{CLAIM}`,
//! `{NUMBERED SENTENCES}`). Lower-case brace text such as `{your_label}` is
//! literal prompt text. A block wrapped in `{#NAME}` ... `{/NAME}` is kept
//! only when `NAME` is bound.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedTag {
    Label,
    SentenceNumbers,
    ScoreAndJustification,
}

impl ExpectedTag {
    /// Appended to the prompt when a response could not be parsed.
    pub fn reformat_reminder(&self) -> &'static str {
        match self {
            ExpectedTag::Label => {
                "Reminder: finish your answer with the final label in the format <Label>{your_label}</Label>."
            }
            ExpectedTag::SentenceNumbers => {
                "Reminder: finish your answer with the supporting sentence numbers inside <Label>\n{sentence numbers}\n</Label>, one number per line, or an empty <Label></Label> tag if no sentence supports the claim."
            }
            ExpectedTag::ScoreAndJustification => {
                "Reminder: provide the final score as <score>{score}</score> and a non-empty justification as <justification>{justification}</justification>."
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
    pub expected_tag: ExpectedTag,
}

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, PartialEq)]
enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
    Open(&'a str),
    Close(&'a str),
}

fn is_placeholder_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_uppercase())
        && name
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_' || c == ' ')
        && !name.ends_with(' ')
}

fn tokenize(body: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = body;
    let mut text_start = 0usize;
    let mut offset = 0usize;
    while let Some(open) = rest.find('{') {
        let abs_open = offset + open;
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else { break };
        let inner = &after[..close];
        let piece = if let Some(name) = inner.strip_prefix('#') {
            is_placeholder_name(name).then_some(Piece::Open(name))
        } else if let Some(name) = inner.strip_prefix('/') {
            is_placeholder_name(name).then_some(Piece::Close(name))
        } else {
            is_placeholder_name(inner).then_some(Piece::Slot(inner))
        };
        let consumed = open + 1 + close + 1;
        if let Some(piece) = piece {
            if abs_open > text_start {
                pieces.push(Piece::Text(&body[text_start..abs_open]));
            }
            pieces.push(piece);
            text_start = offset + consumed;
            rest = &rest[consumed..];
            offset += consumed;
        } else {
            // Literal brace text; skip past the opening brace only.
            rest = &rest[open + 1..];
            offset += open + 1;
        }
    }
    if text_start < body.len() {
        pieces.push(Piece::Text(&body[text_start..]));
    }
    pieces
}

impl PromptTemplate {
    pub fn new(template_id: &str, body: &str, expected_tag: ExpectedTag) -> Self {
        Self {
            template_id: template_id.to_string(),
            body: body.to_string(),
            expected_tag,
        }
    }

    /// Placeholder names used in the body, including optional ones.
    pub fn placeholders(&self) -> BTreeSet<String> {
        tokenize(&self.body)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(n) | Piece::Open(n) => Some(n.to_string()),
                _ => None,
            })
            .collect()
    }

    /// Fills every placeholder from `bindings`. Optional blocks whose
    /// placeholder is unbound are dropped entirely.
    pub fn render(&self, bindings: &Bindings) -> Result<String> {
        let mut out = String::with_capacity(self.body.len() * 2);
        let mut skipping: Option<&str> = None;
        for piece in tokenize(&self.body) {
            if let Some(block) = skipping {
                if piece == Piece::Close(block) {
                    skipping = None;
                }
                continue;
            }
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => match bindings.get(name) {
                    Some(value) => out.push_str(value),
                    None => {
                        return Err(Error::MissingBinding {
                            template_id: self.template_id.clone(),
                            placeholder: name.to_string(),
                        })
                    }
                },
                Piece::Open(name) => {
                    if !bindings.contains_key(name) {
                        skipping = Some(name);
                    }
                }
                Piece::Close(_) => {}
            }
        }
        Ok(out)
    }
}

pub const OWN_STATEMENT: &str = "own_statement";
pub const TEXT_EVIDENCE: &str = "text_evidence";
pub const VISUAL_EVIDENCE: &str = "visual_evidence";
pub const OVERSTATEMENT: &str = "overstatement";

const OWN_STATEMENT_BODY: &str = "You will be provided with the abstract and introduction of an academic paper along with a specific sentence from the paper. Your task is to determine whether the given sentence represents an original claim introduced by the authors that is directly relevant to the contribution or selling points of the paper.

Labels:

original_statement: The sentence explicitly presents a novel claim, finding, or result that is directly relevant to the key contributions of the paper. It reflects what the authors are aiming to promote or highlight as a significant contribution.

not_original_statement: The sentence mainly provides background information, references prior work, describes common knowledge, or includes general context not directly tied to the unique contributions of the paper.

The abstract and introduction of the paper:

Abstract:

{ABSTRACT}

Introduction:

{INTRODUCTION}

The sentence you are about to annotate:

{SENTENCE}

You should:

1. Carefully review the context of the paper (abstract and introduction) and the given sentence. Then briefly justify whether the sentence is an original_statement or not_original_statement (up to 100 words).
2. Provide the final annotation label in the format: <Label>{your_label}</Label>";

const TEXT_EVIDENCE_BODY: &str = "You will be given a claim and a list of sentences. Your task is to identify the sentences that support the claim.

A sentence supports the claim if it:

- Directly provides evidence (e.g., experimental results, analysis, conclusions).
- Builds upon the claim by providing relevant context (e.g., background information).

A supporting sentence must not:

- Be a duplicate or paraphrase of the claim.
- Be incomplete.
- Contain text that appears to be part of an OCR-extracted table or figure (e.g., columns of numbers, symbols, \"Table 1\", or values not from a sentence). Such lines should always be ignored.

The sentences are numbered, and you should return only the numbers of the supporting sentences.

Claim:
{CLAIM}

Sentences to evaluate:
{NUMBERED SENTENCES}

Instructions:

Carefully review the claim and sentences. Provide a brief justification (≤ 100 words) for which sentences support the claim.

If multiple sentences support the claim, list each number on a new line. If no sentences support the claim, return an empty <Label> tag.

Provide the final annotation label in the format:

<Label>
{sentence numbers}
</Label>";

const VISUAL_EVIDENCE_BODY: &str = "You will be provided with a research claim and a {FIG_TYPE} (figure or table) extracted from an academic paper.

Your task is to determine whether the visual content is relevant to the claim – that is, whether it provides evidence or context supporting the claim.

A visual is relevant if it:

- Directly provides evidence (e.g., experimental results, analysis, conclusions).
- Builds upon the claim by providing relevant context (e.g., background information).

A visual is not relevant if it:

- Contains no data or analysis tied to the claim.
- Shows unrelated or generic material.
- Is incomplete, unreadable, or too vague to judge its relevance.

Labels:

relevant: The visual supports or builds upon the claim.

not_relevant: The visual is unrelated to the claim.

Claim:

{CLAIM}

Visual information:

Type: {FIG_TYPE}

Caption: {CAPTION}

Visible text: {IMAGE_TEXT}

Instructions:

1. Carefully review the claim and the visual.
2. Briefly justify (≤ 100 words) whether the visual is relevant or not.
3. Provide the final label in this format:
<Label>{relevant OR not_relevant}</Label>";

const OVERSTATEMENT_BODY: &str = "Your role is to assess the degree to which a claim is overstated based on the available evidence.

\u{201c}Overclaiming\u{201d} refers to rhetorical exaggeration: when the wording or framing of a claim amplifies its strength beyond what the paper\u{2019}s own evidence supports.

It concerns rhetorical and linguistic inflation rather than factual correctness.

The Input Information will include:

1. Original Claim: The claim under evaluation.
2. Evidence: Research findings, including figures, tables, or other relevant data supporting the claim.

Optional. Review comment: Reviewer feedback relevant to the claim\u{2019}s validity.

Evaluate the claim against the provided evidence. Assign a score from 0 to 1 representing the degree of exaggeration using the following scale:

0.0: The claim contains no exaggeration and fully aligns with the evidence.

Values closer to 0: Minor exaggeration or slight over-interpretation.

Values closer to 1: Substantial exaggeration beyond what the evidence supports.

1.0: Major exaggeration or strong misrepresentation of the evidence.

Justification: Provide a concise explanation that includes:

Instances of exaggerated wording, insufficient experiments, lack of experimental details, gaps in knowledge, weak grounding in evidence, or missing limitations.

Direct references to the relevant evidence supporting your reasoning.

If a review comment is included, consider relevant points but do not mention or reference the review.

Do not mention or restate the score in the justification.

The claim to be assessed is:

{CLAIM}

{#REVIEW}The review comment to be evaluated is:

{REVIEW}

{/REVIEW}The evidence to be evaluated is:

{EVIDENCE}

You should:

1. Review the claim and the text and image evidence. Summarize how the evidence influences your evaluation of the claim and briefly explain whether the claim is well-stated or overstated on the 0-1 scale (up to 100 words).

2. Provide the final score in the format: <score>{score}</score>.

3. Provide your justification in the format: <justification>{justification}</justification>.";

/// Own-statement classification of one abstract/introduction sentence.
pub fn own_statement() -> PromptTemplate {
    PromptTemplate::new(OWN_STATEMENT, OWN_STATEMENT_BODY, ExpectedTag::Label)
}

/// Supporting-sentence selection over a numbered body chunk.
pub fn text_evidence() -> PromptTemplate {
    PromptTemplate::new(TEXT_EVIDENCE, TEXT_EVIDENCE_BODY, ExpectedTag::SentenceNumbers)
}

/// Relevance of one figure or table to a claim.
pub fn visual_evidence() -> PromptTemplate {
    PromptTemplate::new(VISUAL_EVIDENCE, VISUAL_EVIDENCE_BODY, ExpectedTag::Label)
}

/// Overstatement scoring; the review block renders only when `REVIEW` is bound.
pub fn overstatement() -> PromptTemplate {
    PromptTemplate::new(
        OVERSTATEMENT,
        OVERSTATEMENT_BODY,
        ExpectedTag::ScoreAndJustification,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, &str)]) -> Bindings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn own_statement_contains_all_bindings() {
        let t = own_statement();
        assert_eq!(
            t.placeholders().into_iter().collect::<Vec<_>>(),
            vec!["ABSTRACT", "INTRODUCTION", "SENTENCE"]
        );
        let out = t
            .render(&bind(&[
                ("ABSTRACT", "abstract text A"),
                ("INTRODUCTION", "intro text I"),
                ("SENTENCE", "the sentence S"),
            ]))
            .unwrap();
        assert!(out.contains("abstract text A"));
        assert!(out.contains("intro text I"));
        assert!(out.contains("the sentence S"));
        assert!(out.contains("<Label>{your_label}</Label>"));
    }

    #[test]
    fn literal_braces_are_not_placeholders() {
        let t = text_evidence();
        assert_eq!(
            t.placeholders().into_iter().collect::<Vec<_>>(),
            vec!["CLAIM", "NUMBERED SENTENCES"]
        );
        let v = visual_evidence();
        assert!(v.placeholders().contains("IMAGE_TEXT"));
        assert!(!v.placeholders().iter().any(|p| p.contains("OR")));
    }

    #[test]
    fn zero_placeholders_is_identity() {
        let t = PromptTemplate::new("plain", "Nothing {to} fill here.", ExpectedTag::Label);
        assert_eq!(t.render(&Bindings::new()).unwrap(), "Nothing {to} fill here.");
    }

    #[test]
    fn missing_binding_names_placeholder() {
        let err = own_statement()
            .render(&bind(&[("ABSTRACT", "a"), ("SENTENCE", "s")]))
            .unwrap_err();
        assert!(err.to_string().contains("{INTRODUCTION}"), "{err}");
    }

    #[test]
    fn review_block_elided_when_unbound() {
        let t = overstatement();
        let paper_only = t.render(&bind(&[("CLAIM", "C"), ("EVIDENCE", "E")])).unwrap();
        assert!(!paper_only.contains("The review comment to be evaluated is:"));
        assert!(paper_only.contains("The claim to be assessed is:\n\nC\n\nThe evidence to be evaluated is:\n\nE"));
        assert!(paper_only.contains("Optional. Review comment"));

        let with_review = t
            .render(&bind(&[("CLAIM", "C"), ("EVIDENCE", "E"), ("REVIEW", "R")]))
            .unwrap();
        assert!(with_review.contains("\n\nC\n\nThe review comment to be evaluated is:\n\nR\n\nThe evidence to be evaluated is:\n\nE"));
    }

    #[test]
    fn bound_values_are_not_re_expanded() {
        let t = PromptTemplate::new("t", "[{A}]", ExpectedTag::Label);
        assert_eq!(t.render(&bind(&[("A", "{A}")])).unwrap(), "[{A}]");
    }
}
