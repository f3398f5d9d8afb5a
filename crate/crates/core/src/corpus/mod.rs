//! Paper document model, loading and validation.
//!
//! Input papers are JSON files holding pre-extracted text. Loading segments
//! every section into sentences and assigns paper-global, dense sentence IDs
//! in document order: abstract first, then introduction, then body sections.

mod segment;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use segment::{collapse_whitespace, RuleSegmenter, SentenceSegmenter};

use crate::error::{Error, Result};

pub type SentenceId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Venue {
    Iclr,
    NeurIps,
    Other,
}

impl Venue {
    pub fn as_str(&self) -> &'static str {
        match self {
            Venue::Iclr => "ICLR",
            Venue::NeurIps => "NeurIPS",
            Venue::Other => "other",
        }
    }
}

impl fmt::Display for Venue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<String> for Venue {
    fn from(s: String) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "iclr" => Venue::Iclr,
            "neurips" | "nips" => Venue::NeurIps,
            _ => Venue::Other,
        }
    }
}

impl From<Venue> for String {
    fn from(v: Venue) -> Self {
        v.as_str().to_string()
    }
}

impl Serialize for Venue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Venue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d).map(Venue::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Abstract,
    Introduction,
    Body,
}

impl Origin {
    /// Sentences from the abstract or introduction may become claims.
    pub fn is_claim_eligible(&self) -> bool {
        matches!(self, Origin::Abstract | Origin::Introduction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceUnit {
    pub sentence_id: SentenceId,
    pub text: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub section_id: String,
    pub title: String,
    pub sentences: Vec<SentenceUnit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisualKind {
    Figure,
    Table,
}

impl VisualKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VisualKind::Figure => "figure",
            VisualKind::Table => "table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualItem {
    pub visual_id: String,
    pub kind: VisualKind,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<PathBuf>,
}

impl VisualItem {
    /// Caption plus any extracted text; what text-only consumers see.
    pub fn text_surrogate(&self) -> String {
        match self.extracted_text.as_deref().map(str::trim) {
            Some(extra) if !extra.is_empty() => format!("{} {}", self.caption.trim(), extra),
            _ => self.caption.trim().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewComment {
    pub review_id: String,
    pub text: String,
    pub overall_score: i64,
}

/// One validated paper with ID-indexed sentence units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperDocument {
    pub paper_id: String,
    pub venue: Venue,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub introduction: String,
    pub abstract_section: Section,
    pub introduction_section: Section,
    pub body_sections: Vec<Section>,
    pub visuals: Vec<VisualItem>,
    pub reviews: Vec<ReviewComment>,
    pub reviewer_overall_scores: Vec<i64>,
}

/// Wire format of an input paper file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPaper {
    paper_id: String,
    venue: Venue,
    #[serde(default, rename = "abstract")]
    abstract_text: String,
    #[serde(default)]
    introduction: String,
    #[serde(default)]
    sections: Vec<RawSection>,
    #[serde(default)]
    visuals: Vec<VisualItem>,
    #[serde(default)]
    reviews: Vec<ReviewComment>,
    #[serde(default)]
    reviewer_overall_scores: Vec<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSection {
    section_id: String,
    #[serde(default)]
    title: String,
    text: String,
}

impl PaperDocument {
    /// Builds a paper from raw JSON text, segmenting with `segmenter`.
    pub fn from_json(
        json: &str,
        source: &Path,
        segmenter: &dyn SentenceSegmenter,
    ) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(json);
        let raw: RawPaper = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let base = source.parent().unwrap_or_else(|| Path::new(""));
        Self::from_raw(raw, base, segmenter)
    }

    fn from_raw(raw: RawPaper, base: &Path, segmenter: &dyn SentenceSegmenter) -> Result<Self> {
        let invalid = |message: &str| Error::Validation {
            paper_id: raw.paper_id.clone(),
            message: message.to_string(),
        };
        if raw.paper_id.trim().is_empty() {
            return Err(invalid("paper_id empty"));
        }
        if raw.abstract_text.trim().is_empty() {
            return Err(invalid("abstract empty"));
        }
        if raw.introduction.trim().is_empty() {
            return Err(invalid("introduction empty"));
        }
        check_unique(raw.sections.iter().map(|s| s.section_id.as_str()), "section_id")
            .map_err(|m| invalid(&m))?;
        check_unique(raw.visuals.iter().map(|v| v.visual_id.as_str()), "visual_id")
            .map_err(|m| invalid(&m))?;
        check_unique(raw.reviews.iter().map(|r| r.review_id.as_str()), "review_id")
            .map_err(|m| invalid(&m))?;
        if let Some(v) = raw.visuals.iter().find(|v| v.caption.trim().is_empty()) {
            return Err(invalid(&format!("visual {} has an empty caption", v.visual_id)));
        }
        if let Some(r) = raw.reviews.iter().find(|r| r.text.trim().is_empty()) {
            return Err(invalid(&format!("review {} has empty text", r.review_id)));
        }

        let mut next_id: SentenceId = 0;
        let mut make_section = |id: &str, title: &str, text: &str, origin: Origin| Section {
            section_id: id.to_string(),
            title: title.to_string(),
            sentences: segmenter
                .split(text)
                .into_iter()
                .map(|text| {
                    let unit = SentenceUnit {
                        sentence_id: next_id,
                        text,
                        origin,
                    };
                    next_id += 1;
                    unit
                })
                .collect(),
        };
        let abstract_section =
            make_section("abstract", "Abstract", &raw.abstract_text, Origin::Abstract);
        let introduction_section = make_section(
            "introduction",
            "Introduction",
            &raw.introduction,
            Origin::Introduction,
        );
        let body_sections = raw
            .sections
            .iter()
            .map(|s| make_section(&s.section_id, &s.title, &s.text, Origin::Body))
            .collect();

        let visuals = raw
            .visuals
            .into_iter()
            .map(|mut v| {
                v.image_ref = v.image_ref.map(|p| if p.is_relative() { base.join(p) } else { p });
                v
            })
            .collect();

        let paper = PaperDocument {
            paper_id: raw.paper_id,
            venue: raw.venue,
            abstract_text: raw.abstract_text,
            introduction: raw.introduction,
            abstract_section,
            introduction_section,
            body_sections,
            visuals,
            reviews: raw.reviews,
            reviewer_overall_scores: raw.reviewer_overall_scores,
        };
        paper.validate()?;
        Ok(paper)
    }

    /// Re-checks the sentence-ID invariants: IDs are 0..N-1 in document
    /// order with no gaps, no sentence is empty, and origins match sections.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Validation {
            paper_id: self.paper_id.clone(),
            message,
        };
        for (expected, unit) in self.sentences().enumerate() {
            if unit.sentence_id as usize != expected {
                return Err(fail(format!(
                    "sentence id {} found at position {expected}",
                    unit.sentence_id
                )));
            }
            if unit.text.trim().is_empty() {
                return Err(fail(format!("sentence {} is empty", unit.sentence_id)));
            }
        }
        let origin_ok = self
            .abstract_section
            .sentences
            .iter()
            .all(|s| s.origin == Origin::Abstract)
            && self
                .introduction_section
                .sentences
                .iter()
                .all(|s| s.origin == Origin::Introduction)
            && self.body_sentences().all(|s| s.origin == Origin::Body);
        if !origin_ok {
            return Err(fail("sentence origin does not match its section".into()));
        }
        Ok(())
    }

    /// All sentence units in ID order.
    pub fn sentences(&self) -> impl Iterator<Item = &SentenceUnit> {
        self.abstract_section
            .sentences
            .iter()
            .chain(&self.introduction_section.sentences)
            .chain(self.body_sections.iter().flat_map(|s| &s.sentences))
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences().count()
    }

    pub fn sentence(&self, id: SentenceId) -> Option<&SentenceUnit> {
        // IDs are dense and ordered, so the position is the ID.
        self.sentences().nth(id as usize)
    }

    /// Abstract and introduction sentences, in order.
    pub fn claim_candidates(&self) -> impl Iterator<Item = &SentenceUnit> {
        self.abstract_section
            .sentences
            .iter()
            .chain(&self.introduction_section.sentences)
    }

    pub fn body_sentences(&self) -> impl Iterator<Item = &SentenceUnit> {
        self.body_sections.iter().flat_map(|s| &s.sentences)
    }

    pub fn review(&self, review_id: &str) -> Option<&ReviewComment> {
        self.reviews.iter().find(|r| r.review_id == review_id)
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, what: &str) -> std::result::Result<(), String> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(format!("duplicate {what} {id:?}"));
        }
    }
    Ok(())
}

/// Loads and validates one paper file with the default segmenter.
pub fn load_paper(path: impl AsRef<Path>) -> Result<PaperDocument> {
    load_paper_with(path, &RuleSegmenter::default())
}

pub fn load_paper_with(
    path: impl AsRef<Path>,
    segmenter: &dyn SentenceSegmenter,
) -> Result<PaperDocument> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PaperDocument::from_json(&json, path, segmenter)
}

/// Loads every `*.json` file in `dir` (sorted by file name) and checks that
/// paper IDs are unique across the corpus.
pub fn load_corpus(dir: impl AsRef<Path>, segmenter: &dyn SentenceSegmenter) -> Result<Vec<PaperDocument>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();

    let mut seen = HashSet::new();
    let mut papers = Vec::with_capacity(paths.len());
    for path in paths {
        let paper = load_paper_with(&path, segmenter)?;
        if !seen.insert(paper.paper_id.clone()) {
            return Err(Error::Validation {
                paper_id: paper.paper_id,
                message: format!("duplicate paper_id in corpus ({})", path.display()),
            });
        }
        papers.push(paper);
    }
    Ok(papers)
}

/// True when there is at least one score and all scores are equal.
pub fn is_unanimous(scores: &[i64]) -> bool {
    scores.first().is_some_and(|first| scores.iter().all(|s| s == first))
}

/// Keeps papers whose reviewers all gave the same overall score.
pub fn filter_unanimous(papers: Vec<PaperDocument>) -> Vec<PaperDocument> {
    papers
        .into_iter()
        .filter(|p| is_unanimous(&p.reviewer_overall_scores))
        .collect()
}
