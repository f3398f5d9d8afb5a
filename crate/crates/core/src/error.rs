use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path} at `{field}`: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("invalid paper {paper_id}: {message}")]
    Validation { paper_id: String, message: String },

    #[error("template {template_id}: no binding for placeholder {{{placeholder}}}")]
    MissingBinding {
        template_id: String,
        placeholder: String,
    },

    #[error("modality mismatch: annotator {annotator_id} is text-only but received {n_images} image(s)")]
    ModalityMismatch {
        annotator_id: String,
        n_images: usize,
    },

    #[error("cannot read image payload {path}: {message}")]
    ImagePayload { path: PathBuf, message: String },

    #[error("no votes to aggregate")]
    EmptyVotes,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("claim keys differ between inputs; missing: {missing:?}")]
    KeyMismatch { missing: Vec<String> },

    #[error("run file is missing claims present in qrels: {0:?}")]
    MissingRuns(Vec<String>),

    #[error("split error: {0}")]
    Split(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` requires the output of `{requires}` ({missing} not found); run `{requires}` first")]
    MissingStage {
        stage: String,
        requires: String,
        missing: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short name of the variant, for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::MissingBinding { .. } => "missing_binding",
            Error::ModalityMismatch { .. } => "modality_mismatch",
            Error::ImagePayload { .. } => "image_payload",
            Error::EmptyVotes => "empty_votes",
            Error::Precondition(_) => "precondition",
            Error::ScoreOutOfRange(_) => "score_out_of_range",
            Error::Undefined(_) => "undefined",
            Error::KeyMismatch { .. } => "key_mismatch",
            Error::MissingRuns(_) => "missing_runs",
            Error::Split(_) => "split",
            Error::Config(_) => "config",
            Error::MissingStage { .. } => "missing_stage",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
