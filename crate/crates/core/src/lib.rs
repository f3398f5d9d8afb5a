//! Detect overstated claims in scientific papers.
//!
//! The pipeline loads pre-extracted papers, asks a panel of LLM annotators
//! which abstract and introduction sentences state the authors' own
//! contributions, gathers supporting evidence from the body text and
//! figures, and scores each claim for overstatement relative to that
//! evidence. Supporting modules compute inter-annotator agreement, build
//! train/dev/test splits, and evaluate retrieval and score-regression
//! systems.

pub mod annotator;
pub mod claims;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod evidence;
pub mod io;
pub mod pipeline;
pub mod ireval;
pub mod regeval;
pub mod report;
pub mod scoring;
pub mod stats;
pub mod summary;

pub use error::{Error, Result};
