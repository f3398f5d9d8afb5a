//! Runs every stage on the bundled three-paper corpus with stub annotators
//! and prints the statistics and dataset tables.
//!
//! cargo run --example full_pipeline [run-dir]

use std::path::{Path, PathBuf};

use overclaim::pipeline::{Pipeline, PipelineConfig};
use overclaim::report;

fn main() -> overclaim::Result<()> {
    let _ = env_logger::builder().filter_level(log::LevelFilter::Error).try_init();
    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pipeline.toml");
    let config = PipelineConfig::load(&config_path)?;
    let tmp = tempfile::tempdir().map_err(|e| overclaim::Error::Io { path: std::env::temp_dir(), source: e })?;
    let kept = std::env::args().nth(1).map(PathBuf::from);
    let run_dir = kept.clone().unwrap_or_else(|| tmp.path().to_path_buf());

    let pipeline = Pipeline::new(config, &run_dir)?;
    pipeline.run_all()?;
    let summary = pipeline.stats()?;
    print!("{}", report::render_stats(&summary));
    let (stats, manifest) = pipeline.export()?;
    println!();
    print!("{}", report::render_dataset_stats(&stats));
    for (name, (rows, sha)) in &manifest.files {
        println!("{name:<22} {rows:>4} rows  {}", &sha[..12]);
    }
    if let Some(dir) = kept {
        println!("outputs in {}", dir.display());
    }
    Ok(())
}
