#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use overclaim::pipeline::{Pipeline, PipelineConfig};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_config() -> PipelineConfig {
    PipelineConfig::load(&fixtures().join("pipeline.toml")).expect("fixture config")
}

/// Run-directory files that must be reproducible byte for byte. Paper
/// records and the run manifest embed absolute paths and are left out.
pub const GOLDEN_FILES: &[&str] = &[
    "sentence_votes.jsonl",
    "claims.jsonl",
    "claims_audit.jsonl",
    "evidence.jsonl",
    "text_votes.jsonl",
    "visual_votes.jsonl",
    "scores.jsonl",
    "score_failures.jsonl",
    "soft_labels.jsonl",
    "stats.json",
    "stats.txt",
    "splits.json",
    "dataset_stats.json",
    "export/manifest.json",
    "export/retrieval_train.jsonl",
    "export/retrieval_dev.jsonl",
    "export/retrieval_test.jsonl",
    "export/scorer_train.jsonl",
    "export/scorer_dev.jsonl",
    "export/scorer_test.jsonl",
    "export/qrels_train.txt",
    "export/qrels_dev.txt",
    "export/qrels_test.txt",
];

pub fn golden_dir() -> PathBuf {
    fixtures().join("golden")
}

pub fn run_fixture_pipeline(run_dir: &Path, cache_dir: Option<&Path>) -> overclaim::Result<()> {
    let mut config = fixture_config();
    config.cache_dir = cache_dir.map(Path::to_path_buf);
    Pipeline::new(config, run_dir)?.run_all()
}

/// Compares the golden files of two run directories; returns the names
/// that differ.
pub fn diff_runs(a: &Path, b: &Path) -> Vec<String> {
    GOLDEN_FILES
        .iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok())
        .map(|f| f.to_string())
        .collect()
}

/// Checks `run_dir` against the committed golden files, or rewrites them
/// when `UPDATE_GOLDEN=1`.
pub fn check_golden(run_dir: &Path) -> Vec<String> {
    let golden = golden_dir();
    if std::env::var("UPDATE_GOLDEN").as_deref() == Ok("1") {
        for f in GOLDEN_FILES {
            let dest = golden.join(f);
            fs::create_dir_all(dest.parent().unwrap()).unwrap();
            fs::copy(run_dir.join(f), dest).unwrap();
        }
        return Vec::new();
    }
    diff_runs(run_dir, &golden)
}

pub fn golden_text(name: &str, actual: &str) -> Result<(), String> {
    let path = fixtures().join(name);
    if std::env::var("UPDATE_GOLDEN").as_deref() == Ok("1") {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{} differs from the rendered text:\n{actual}", path.display()))
    }
}
