use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use overclaim::dataset::Split;
use overclaim::io::{read_json, write_json};
use overclaim::ireval::{evaluate_run, read_qrels, read_run, DEFAULT_KS};
use overclaim::pipeline::{Pipeline, PipelineConfig, EXPORT_DIR, SOFT_LABELS};
use overclaim::regeval::{evaluate_predictions, read_predictions, read_soft_labels};
use overclaim::report::{self, ModelResult};
use overclaim::{Error, Result};

#[derive(Parser)]
#[command(name = "overclaim", version, about = "Claim extraction, evidence alignment and overstatement scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; defaults to the config's run_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, segment and validate the paper corpus.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Corpus directory, overriding the config.
        #[arg(long)]
        papers: Option<PathBuf>,
    },
    /// Classify abstract and introduction sentences with the panel.
    ExtractClaims(Common),
    /// Select supporting passages and visuals for every claim.
    AnnotateEvidence(Common),
    /// Score claims paper-only and once per review.
    Score(Common),
    /// Average scores into soft labels.
    Aggregate(Common),
    /// Agreement, leave-one-model-out and review-shift statistics.
    Stats(Common),
    /// Assign papers to train/dev/test.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write reranker and scorer training files.
    Export(Common),
    /// Evaluate a ranked run against relevance judgements.
    EvalRetrieval {
        #[command(flatten)]
        common: Common,
        /// Run file: `claim_id evidence_id rank score` lines.
        #[arg(long)]
        run: PathBuf,
        /// Qrels file; defaults to the exported qrels of --split.
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long)]
        split: Option<String>,
        /// Metric cutoffs.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Model name recorded in the run directory's results.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        group: Option<String>,
    },
    /// Evaluate predicted overstatement scores against soft labels.
    EvalOverstatement {
        #[command(flatten)]
        common: Common,
        /// Predictions: `claim_id score` lines.
        #[arg(long)]
        predictions: PathBuf,
        /// Soft-label file; defaults to the run's soft labels for --split.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        group: Option<String>,
    },
    /// Render tables from the result files in a run directory.
    Report(Common),
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    PipelineConfig::load(path)
}

fn run_dir(common: &Common, config: Option<&PipelineConfig>) -> Result<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.run_dir.clone()))
        .ok_or_else(|| Error::Config("no run directory: pass --out or set run_dir in the config".into()))
}

fn pipeline(common: &Common) -> Result<Pipeline> {
    let config = load_config(common)?;
    let dir = run_dir(common, Some(&config))?;
    Pipeline::new(config, dir)
}

fn optional_run_dir(common: &Common) -> Result<Option<PathBuf>> {
    let config = match &common.config {
        Some(p) => Some(PipelineConfig::load(p)?),
        None => None,
    };
    Ok(common.out.clone().or_else(|| config.and_then(|c| c.run_dir)))
}

fn parse_split(s: &str) -> Result<Split> {
    Split::parse(s).ok_or_else(|| Error::Config(format!("unknown split {s:?}; expected train, dev or test")))
}

/// Replaces the entry with the same name or appends a new one.
fn upsert<T>(path: &Path, entry: ModelResult<T>) -> Result<()>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let mut entries: Vec<ModelResult<T>> = if path.exists() { read_json(path)? } else { Vec::new() };
    match entries.iter_mut().find(|e| e.name == entry.name) {
        Some(e) => *e = entry,
        None => entries.push(entry),
    }
    write_json(path, &entries)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { common, papers } => {
            let mut config = load_config(&common)?;
            if let Some(p) = papers {
                config.corpus_dir = p;
            }
            let dir = run_dir(&common, Some(&config))?;
            let papers = Pipeline::new(config, dir)?.ingest()?;
            let sentences: usize = papers.iter().map(|p| p.sentence_count()).sum();
            println!("ingested {} papers, {sentences} sentences", papers.len());
        }
        Command::ExtractClaims(common) => {
            let claims = pipeline(&common)?.extract_claims()?;
            println!("extracted {} claims", claims.len());
        }
        Command::AnnotateEvidence(common) => {
            let sets = pipeline(&common)?.annotate_evidence()?;
            let supporting: usize = sets.iter().map(|s| s.items.len()).sum();
            let total: usize = sets.iter().map(|s| s.all_items().count()).sum();
            println!("{total} evidence items for {} claims, {supporting} supporting", sets.len());
        }
        Command::Score(common) => {
            let records = pipeline(&common)?.score()?;
            println!("{} score records", records.len());
        }
        Command::Aggregate(common) => {
            let labels = pipeline(&common)?.aggregate()?;
            println!("{} soft labels", labels.len());
        }
        Command::Stats(common) => {
            let summary = pipeline(&common)?.stats()?;
            print!("{}", report::render_stats(&summary));
        }
        Command::Split { common, seed } => {
            let a = pipeline(&common)?.split(seed)?;
            for s in Split::ALL {
                println!("{s}: {} papers", a.papers_in(s).count());
            }
        }
        Command::Export(common) => {
            let (stats, manifest) = pipeline(&common)?.export()?;
            print!("{}", report::render_dataset_stats(&stats));
            for (name, (rows, _)) in &manifest.files {
                println!("{name}: {rows} rows");
            }
        }
        Command::EvalRetrieval {
            common,
            run,
            qrels,
            split,
            k,
            name,
            group,
        } => {
            let dir = optional_run_dir(&common)?;
            let qrels_path = match (qrels, split, &dir) {
                (Some(q), _, _) => q,
                (None, Some(s), Some(d)) => d.join(EXPORT_DIR).join(format!("qrels_{}.txt", parse_split(&s)?)),
                _ => return Err(Error::Config("pass --qrels, or --split with a run directory".into())),
            };
            let ks = k.unwrap_or_else(|| DEFAULT_KS.to_vec());
            let result = evaluate_run(&read_run(&run)?, &read_qrels(&qrels_path)?, &ks)?;
            let name = name.unwrap_or_else(|| run.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned()));
            print!("{}", result.render(&name));
            if let Some(d) = dir {
                upsert(
                    &d.join(report::RETRIEVAL_RESULTS_FILE),
                    ModelResult {
                        name,
                        group,
                        report: result,
                    },
                )?;
            }
        }
        Command::EvalOverstatement {
            common,
            predictions,
            reference,
            split,
            name,
            group,
        } => {
            let dir = optional_run_dir(&common)?;
            let reference: BTreeMap<String, f64> = match (reference, &dir) {
                (Some(r), _) => read_soft_labels(&r)?,
                (None, Some(d)) => {
                    let all = read_soft_labels(&d.join(SOFT_LABELS))?;
                    match split {
                        Some(s) => {
                            let split = parse_split(&s)?;
                            let assignment: overclaim::dataset::SplitAssignment =
                                read_json(&d.join(overclaim::pipeline::SPLITS))?;
                            all.into_iter()
                                .filter(|(c, _)| assignment.split_of_claim(c) == Some(split))
                                .collect()
                        }
                        None => all,
                    }
                }
                (None, None) => return Err(Error::Config("pass --reference, or a run directory".into())),
            };
            let result = evaluate_predictions(&read_predictions(&predictions)?, &reference)?;
            let name =
                name.unwrap_or_else(|| predictions.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned()));
            print!("{}", result.render(&name));
            if let Some(d) = dir {
                upsert(
                    &d.join(report::OVERSTATEMENT_RESULTS_FILE),
                    ModelResult {
                        name,
                        group,
                        report: result,
                    },
                )?;
            }
        }
        Command::Report(common) => {
            let dir = optional_run_dir(&common)?
                .ok_or_else(|| Error::Config("pass --out with the run directory".into()))?;
            let text = report::render_all(&dir)?;
            overclaim::io::write_atomic(&dir.join("report.txt"), text.as_bytes())?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
