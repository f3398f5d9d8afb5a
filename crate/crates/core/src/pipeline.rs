//! Stage runner behind the command-line tool. Every stage reads the files
//! written by earlier stages from a run directory and writes its own, so
//! stages can be re-run independently.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::annotator::{Annotator, AnnotatorConfig, ResponseCache, StubBackend};
use crate::claims::{extract_claims, Claim, ClaimLabel, SentenceVotes};
use crate::corpus::{filter_unanimous, load_corpus, PaperDocument, RuleSegmenter};
use crate::dataset::{dataset_stats, split_corpus, write_exports, DatasetStats, ExportManifest, SplitAssignment, SplitRatios};
use crate::error::{Error, Result};
use crate::evidence::{collect_evidence, ClaimEvidenceSet, ContextSelections, EvidenceItem, EvidenceOptions, VisualVotes, DEFAULT_TOKEN_BUDGET};
use crate::io::{read_json, read_jsonl, sha256_file, write_json, write_jsonl};
use crate::report;
use crate::scoring::{score_all, soft_labels, ScoreContext, ScoreRecord, SoftLabel, DEFAULT_BIN_EDGES};
use crate::summary::{summarize, SettingVotes, StatsSummary};

pub const PAPERS: &str = "papers.jsonl";
pub const SENTENCE_VOTES: &str = "sentence_votes.jsonl";
pub const CLAIMS: &str = "claims.jsonl";
pub const CLAIMS_AUDIT: &str = "claims_audit.jsonl";
pub const EVIDENCE: &str = "evidence.jsonl";
pub const TEXT_VOTES: &str = "text_votes.jsonl";
pub const VISUAL_VOTES: &str = "visual_votes.jsonl";
pub const SCORES: &str = "scores.jsonl";
pub const SCORE_FAILURES: &str = "score_failures.jsonl";
pub const SOFT_LABELS: &str = "soft_labels.jsonl";
pub const STATS_TEXT: &str = "stats.txt";
pub const SPLITS: &str = "splits.json";
pub const EXPORT_DIR: &str = "export";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    /// Default run directory when none is given on the command line.
    #[serde(default)]
    pub run_dir: Option<PathBuf>,
    /// Rules for annotators with `stub:` endpoints.
    #[serde(default)]
    pub stub_responses: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub token_budget: usize,
    #[serde(default)]
    pub merge_gap: u32,
    #[serde(default)]
    pub tie_break: ClaimLabel,
    #[serde(default = "default_edges")]
    pub bin_edges: Vec<f64>,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Keep only papers whose reviewers agree on the overall score.
    #[serde(default)]
    pub unanimous_only: bool,
    #[serde(default)]
    pub max_negatives: Option<usize>,
    #[serde(rename = "annotator")]
    pub annotators: Vec<AnnotatorConfig>,
}

fn default_budget() -> usize {
    DEFAULT_TOKEN_BUDGET
}

fn default_edges() -> Vec<f64> {
    DEFAULT_BIN_EDGES.to_vec()
}

fn default_parallelism() -> usize {
    4
}

impl PipelineConfig {
    /// Parses a TOML config; relative paths are taken from the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = toml::Deserializer::parse(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            field: String::new(),
            message: e.to_string(),
        })?;
        let mut config: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.corpus_dir);
        for p in [&mut self.cache_dir, &mut self.run_dir, &mut self.stub_responses].into_iter().flatten() {
            join(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.annotators.is_empty() {
            return Err(Error::Config("at least one annotator is required".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for a in &self.annotators {
            if !ids.insert(&a.annotator_id) {
                return Err(Error::Config(format!("duplicate annotator_id {}", a.annotator_id)));
            }
        }
        if self.token_budget < 64 {
            return Err(Error::Config(format!("token_budget must be >= 64, got {}", self.token_budget)));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        if self.bin_edges.windows(2).any(|w| w[0] >= w[1]) || self.bin_edges.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::Config(format!("bin_edges must increase within [0, 1]: {:?}", self.bin_edges)));
        }
        self.split.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn annotator_ids(&self) -> Vec<String> {
        self.annotators.iter().map(|a| a.annotator_id.clone()).collect()
    }
}

/// Input and output hashes of each completed stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub run_dir: PathBuf,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, run_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Self {
            config,
            run_dir: run_dir.into(),
            pool,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    fn require(&self, stage: &str, requires: &str, file: &str) -> Result<PathBuf> {
        let p = self.path(file);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingStage {
                stage: stage.into(),
                requires: requires.into(),
                missing: p.display().to_string(),
            })
        }
    }

    fn record(&self, stage: &str, inputs: &[PathBuf], outputs: &[&str]) -> Result<()> {
        let manifest_path = self.path(MANIFEST);
        let mut manifest: RunManifest = if manifest_path.exists() {
            read_json(&manifest_path)?
        } else {
            RunManifest::default()
        };
        let name = |p: &Path| {
            p.strip_prefix(&self.run_dir)
                .map(|r| r.display().to_string())
                .unwrap_or_else(|_| p.display().to_string())
        };
        let mut rec = StageRecord::default();
        for p in inputs {
            rec.inputs.insert(name(p), sha256_file(p)?);
        }
        for o in outputs {
            rec.outputs.insert(o.to_string(), sha256_file(&self.path(o))?);
        }
        manifest.stages.insert(stage.into(), rec);
        write_json(&manifest_path, &manifest)
    }

    pub fn panel(&self) -> Result<Vec<Annotator>> {
        let needs_stub = self.config.annotators.iter().any(|a| a.endpoint_url.starts_with(crate::annotator::STUB_SCHEME));
        let stub = match (&self.config.stub_responses, needs_stub) {
            (Some(p), true) => Some(Arc::new(StubBackend::from_file(p)?)),
            _ => None,
        };
        self.config
            .annotators
            .iter()
            .map(|c| {
                let cache = match &self.config.cache_dir {
                    Some(dir) => Some(ResponseCache::new(dir.join(&c.annotator_id))?),
                    None => None,
                };
                Annotator::from_config(c.clone(), stub.clone(), cache)
            })
            .collect()
    }

    pub fn papers(&self, stage: &str) -> Result<Vec<PaperDocument>> {
        read_jsonl(&self.require(stage, "ingest", PAPERS)?)
    }

    pub fn claims(&self, stage: &str) -> Result<Vec<Claim>> {
        read_jsonl(&self.require(stage, "extract-claims", CLAIMS)?)
    }

    /// Claim-evidence sets rebuilt from the flat evidence records, in claim
    /// order.
    pub fn evidence_sets(&self, stage: &str) -> Result<Vec<ClaimEvidenceSet>> {
        let claims = self.claims(stage)?;
        let items: Vec<EvidenceItem> = read_jsonl(&self.require(stage, "annotate-evidence", EVIDENCE)?)?;
        Ok(group_evidence(claims, items))
    }

    pub fn scores(&self, stage: &str) -> Result<Vec<ScoreRecord>> {
        read_jsonl(&self.require(stage, "score", SCORES)?)
    }

    pub fn soft_labels(&self, stage: &str) -> Result<Vec<SoftLabel>> {
        read_jsonl(&self.require(stage, "aggregate", SOFT_LABELS)?)
    }

    pub fn splits(&self, stage: &str) -> Result<SplitAssignment> {
        read_json(&self.require(stage, "split", SPLITS)?)
    }

    /// Loads, segments and validates the corpus.
    pub fn ingest(&self) -> Result<Vec<PaperDocument>> {
        let mut papers = load_corpus(&self.config.corpus_dir, &RuleSegmenter::default())?;
        if self.config.unanimous_only {
            let before = papers.len();
            papers = filter_unanimous(papers);
            log::info!("kept {} of {before} papers with unanimous reviewer scores", papers.len());
        }
        if papers.is_empty() {
            return Err(Error::Precondition(format!("no papers in {}", self.config.corpus_dir.display())));
        }
        write_jsonl(&self.path(PAPERS), &papers)?;
        let mut inputs: Vec<PathBuf> = fs::read_dir(&self.config.corpus_dir)
            .map_err(|e| Error::io(&self.config.corpus_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        inputs.sort();
        self.record("ingest", &inputs, &[PAPERS])?;
        Ok(papers)
    }

    pub fn extract_claims(&self) -> Result<Vec<Claim>> {
        let papers = self.papers("extract-claims")?;
        let panel = self.panel()?;
        let extractions = self.pool.install(|| {
            papers
                .iter()
                .map(|p| extract_claims(p, &panel, self.config.tie_break))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut votes = Vec::new();
        let mut claims = Vec::new();
        let mut audit = Vec::new();
        for e in extractions {
            votes.extend(e.sentence_votes);
            claims.extend(e.claims);
            audit.extend(e.audit);
        }
        log::info!("{} claims from {} candidate sentences", claims.len(), votes.len());
        write_jsonl(&self.path(SENTENCE_VOTES), &votes)?;
        write_jsonl(&self.path(CLAIMS), &claims)?;
        write_jsonl(&self.path(CLAIMS_AUDIT), &audit)?;
        self.record("extract-claims", &[self.path(PAPERS)], &[SENTENCE_VOTES, CLAIMS, CLAIMS_AUDIT])?;
        Ok(claims)
    }

    pub fn annotate_evidence(&self) -> Result<Vec<ClaimEvidenceSet>> {
        let papers = self.papers("annotate-evidence")?;
        let claims = self.claims("annotate-evidence")?;
        let by_id: BTreeMap<&str, &PaperDocument> = papers.iter().map(|p| (p.paper_id.as_str(), p)).collect();
        let panel = self.panel()?;
        let options = EvidenceOptions {
            budget: self.config.token_budget,
            merge_gap: self.config.merge_gap,
        };
        let runs = self.pool.install(|| {
            claims
                .iter()
                .map(|c| {
                    let paper = by_id.get(c.paper_id.as_str()).ok_or_else(|| {
                        Error::Precondition(format!("claim {} refers to unknown paper {}", c.claim_id, c.paper_id))
                    })?;
                    collect_evidence(paper, c, &panel, &options)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut items = Vec::new();
        let mut text_votes = Vec::new();
        let mut visual_votes = Vec::new();
        let mut sets = Vec::new();
        for run in runs {
            items.extend(run.set.all_items().cloned());
            text_votes.extend(run.text_votes);
            visual_votes.extend(run.visual_votes);
            sets.push(run.set);
        }
        write_jsonl(&self.path(EVIDENCE), &items)?;
        write_jsonl(&self.path(TEXT_VOTES), &text_votes)?;
        write_jsonl(&self.path(VISUAL_VOTES), &visual_votes)?;
        self.record(
            "annotate-evidence",
            &[self.path(PAPERS), self.path(CLAIMS)],
            &[EVIDENCE, TEXT_VOTES, VISUAL_VOTES],
        )?;
        Ok(sets)
    }

    pub fn score(&self) -> Result<Vec<ScoreRecord>> {
        let sets = self.evidence_sets("score")?;
        let papers = self.papers("score")?;
        let by_id: BTreeMap<&str, &PaperDocument> = papers.iter().map(|p| (p.paper_id.as_str(), p)).collect();
        let panel = self.panel()?;
        let outcomes = self.pool.install(|| {
            sets.iter()
                .map(|s| {
                    let paper = by_id.get(s.claim.paper_id.as_str()).ok_or_else(|| {
                        Error::Precondition(format!("claim {} refers to unknown paper", s.claim.claim_id))
                    })?;
                    score_all(paper, s, &panel)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut records = Vec::new();
        let mut failures = Vec::new();
        for (set, o) in sets.iter().zip(outcomes) {
            records.extend(o.records);
            failures.extend(o.failures.into_iter().map(|(context, f)| ScoreFailure {
                claim_id: set.claim.claim_id.clone(),
                context,
                annotator_id: f.annotator_id,
                detail: f.detail,
            }));
        }
        write_jsonl(&self.path(SCORES), &records)?;
        write_jsonl(&self.path(SCORE_FAILURES), &failures)?;
        self.record(
            "score",
            &[self.path(PAPERS), self.path(CLAIMS), self.path(EVIDENCE)],
            &[SCORES, SCORE_FAILURES],
        )?;
        Ok(records)
    }

    pub fn aggregate(&self) -> Result<Vec<SoftLabel>> {
        let records = self.scores("aggregate")?;
        let labels = soft_labels(&records, &self.config.bin_edges)?;
        write_jsonl(&self.path(SOFT_LABELS), &labels)?;
        self.record("aggregate", &[self.path(SCORES)], &[SOFT_LABELS])?;
        Ok(labels)
    }

    pub fn stats(&self) -> Result<StatsSummary> {
        let stage = "stats";
        let sentence_votes: Vec<SentenceVotes> =
            read_jsonl(&self.require(stage, "extract-claims", SENTENCE_VOTES)?)?;
        let text_votes: Vec<ContextSelections> = read_jsonl(&self.require(stage, "annotate-evidence", TEXT_VOTES)?)?;
        let visual_votes: Vec<VisualVotes> = read_jsonl(&self.require(stage, "annotate-evidence", VISUAL_VOTES)?)?;
        let records = self.scores(stage)?;
        let votes = SettingVotes::collect(&sentence_votes, &text_votes, &visual_votes);
        let summary = summarize(
            &self.config.annotator_ids(),
            &votes,
            &records,
            self.config.tie_break,
            &self.config.bin_edges,
        );
        write_json(&self.path(report::STATS_FILE), &summary)?;
        crate::io::write_atomic(&self.path(STATS_TEXT), report::render_stats(&summary).as_bytes())?;
        self.record(
            stage,
            &[self.path(SENTENCE_VOTES), self.path(TEXT_VOTES), self.path(VISUAL_VOTES), self.path(SCORES)],
            &[report::STATS_FILE, STATS_TEXT],
        )?;
        Ok(summary)
    }

    pub fn split(&self, seed: Option<u64>) -> Result<SplitAssignment> {
        let papers = self.papers("split")?;
        let assignment = split_corpus(&papers, self.config.split, seed.unwrap_or(self.config.seed))?;
        write_json(&self.path(SPLITS), &assignment)?;
        self.record("split", &[self.path(PAPERS)], &[SPLITS])?;
        Ok(assignment)
    }

    /// Writes training and evaluation files under `export/` and the
    /// per-split statistics.
    pub fn export(&self) -> Result<(DatasetStats, ExportManifest)> {
        let stage = "export";
        let assignment = self.splits(stage)?;
        let sets = self.evidence_sets(stage)?;
        let records = self.scores(stage)?;
        let labels = self.soft_labels(stage)?;
        let stats = dataset_stats(&assignment, &sets, &records);
        write_json(&self.path(report::DATASET_STATS_FILE), &stats)?;
        let manifest = write_exports(
            &self.path(EXPORT_DIR),
            &assignment,
            &sets,
            &records,
            &labels,
            self.config.max_negatives,
        )?;
        self.record(
            stage,
            &[self.path(SPLITS), self.path(CLAIMS), self.path(EVIDENCE), self.path(SCORES), self.path(SOFT_LABELS)],
            &[report::DATASET_STATS_FILE],
        )?;
        Ok((stats, manifest))
    }

    /// Every annotation and dataset stage in order.
    pub fn run_all(&self) -> Result<()> {
        self.ingest()?;
        self.extract_claims()?;
        self.annotate_evidence()?;
        self.score()?;
        self.aggregate()?;
        self.stats()?;
        self.split(None)?;
        self.export()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFailure {
    pub claim_id: String,
    pub context: ScoreContext,
    pub annotator_id: String,
    pub detail: String,
}

/// Rebuilds sets from flat items: supporting items in stored order, the
/// rest as the non-supporting pool.
pub fn group_evidence(claims: Vec<Claim>, items: Vec<EvidenceItem>) -> Vec<ClaimEvidenceSet> {
    let mut by_claim: BTreeMap<String, Vec<EvidenceItem>> = BTreeMap::new();
    for item in items {
        by_claim.entry(item.claim_id.clone()).or_default().push(item);
    }
    claims
        .into_iter()
        .map(|claim| {
            let (items, pool) = by_claim
                .remove(&claim.claim_id)
                .unwrap_or_default()
                .into_iter()
                .partition(|i| i.supporting);
            ClaimEvidenceSet {
                claim,
                items,
                non_supporting_pool: pool,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::Modality;

    fn config() -> PipelineConfig {
        PipelineConfig {
            corpus_dir: "papers".into(),
            cache_dir: None,
            run_dir: None,
            stub_responses: None,
            token_budget: 1000,
            merge_gap: 0,
            tie_break: ClaimLabel::default(),
            bin_edges: default_edges(),
            split: SplitRatios::default(),
            seed: 0,
            parallelism: 2,
            unanimous_only: false,
            max_negatives: None,
            annotators: vec![AnnotatorConfig::new("a", "stub:", "m", Modality::Text)],
        }
    }

    #[test]
    fn config_validation() {
        assert!(config().validate().is_ok());
        let mut c = config();
        c.token_budget = 63;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = config();
        c.annotators.clear();
        assert!(c.validate().is_err());
        let mut c = config();
        c.parallelism = 0;
        assert!(c.validate().is_err());
        let mut c = config();
        c.split = SplitRatios { train: 0.5, dev: 0.5, test: 0.5 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pipeline.toml");
        fs::write(
            &path,
            r#"
corpus_dir = "papers"
cache_dir = "/abs/cache"
seed = 5

[split]
train = 0.6
dev = 0.2
test = 0.2

[[annotator]]
annotator_id = "a"
endpoint_url = "stub:"
model_name = "m"
modality = "text"
"#,
        )
        .unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.corpus_dir, dir.path().join("papers"));
        assert_eq!(c.cache_dir, Some(PathBuf::from("/abs/cache")));
        assert_eq!(c.seed, 5);
        assert_eq!(c.token_budget, DEFAULT_TOKEN_BUDGET);

        fs::write(&path, "corpus_dir = 3\n").unwrap();
        let err = PipelineConfig::load(&path).unwrap_err().to_string();
        assert!(err.contains("corpus_dir"), "{err}");
    }

    #[test]
    fn missing_stage_names_requirement() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(config(), dir.path()).unwrap();
        match p.score() {
            Err(Error::MissingStage { stage, requires, .. }) => {
                assert_eq!(stage, "score");
                assert_eq!(requires, "extract-claims");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(p.aggregate(), Err(Error::MissingStage { requires, .. }) if requires == "score"));
    }
}
