mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::fixtures;

fn overclaim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_overclaim"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn overclaim")
}

fn with_run(cmd: &str, dir: &Path) -> Output {
    with_run_args(cmd, dir, &[])
}

fn with_run_args(cmd: &str, dir: &Path, extra: &[&str]) -> Output {
    let config = fixtures().join("pipeline.toml");
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    overclaim(&args)
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn stage_out_of_order_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    ok(with_run("ingest", dir.path()));
    ok(with_run("extract-claims", dir.path()));
    let out = with_run("score", dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("annotate-evidence"), "{stderr}");
    assert!(stderr.starts_with("error[missing_stage]"), "{stderr}");
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = overclaim(&["ingest", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]"));
}

#[test]
fn full_cli_run_then_evaluate_oracles() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for stage in ["ingest", "extract-claims", "annotate-evidence", "score", "aggregate", "stats", "split", "export"] {
        ok(with_run(stage, d));
    }
    for f in common::GOLDEN_FILES {
        let golden = fs::read(common::golden_dir().join(f)).unwrap();
        assert_eq!(fs::read(d.join(f)).unwrap(), golden, "{f}");
    }

    // A run ranking relevant evidence first is perfect on every metric.
    let qrels = fs::read_to_string(d.join("export/qrels_train.txt")).unwrap();
    let mut per_claim: BTreeMap<&str, Vec<(&str, &str)>> = BTreeMap::new();
    for line in qrels.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        per_claim.entry(f[0]).or_default().push((f[1], f[2]));
    }
    let mut run = String::new();
    for (claim, mut items) in per_claim {
        items.sort_by(|a, b| b.1.cmp(a.1));
        for (rank, (evidence, _)) in items.iter().enumerate() {
            run.push_str(&format!("{claim} {evidence} {} {}\n", rank + 1, 100 - rank));
        }
    }
    let run_path = d.join("oracle.run");
    fs::write(&run_path, run).unwrap();
    let text = ok(with_run_args(
        "eval-retrieval",
        d,
        &["--run", run_path.to_str().unwrap(), "--split", "train", "--name", "oracle"],
    ));
    let row = text.lines().find(|l| l.starts_with("oracle")).unwrap();
    let cells: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cells[1], "100.00", "{text}");
    assert_eq!(cells[2], "100.00", "{text}");
    assert!(d.join("retrieval_results.json").exists());

    // Predicting the soft labels themselves gives CCC 1.
    let labels = fs::read_to_string(d.join("soft_labels.jsonl")).unwrap();
    let preds: String = labels
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            format!("{} {}\n", v["claim_id"].as_str().unwrap(), v["mean_score"])
        })
        .collect();
    let pred_path = d.join("labels.pred");
    fs::write(&pred_path, preds).unwrap();
    let text = ok(with_run_args(
        "eval-overstatement",
        d,
        &["--predictions", pred_path.to_str().unwrap(), "--name", "echo"],
    ));
    assert!(text.lines().any(|l| l.starts_with("echo") && l.contains("1.000  0.000  1.000")), "{text}");

    let report = ok(with_run("report", d));
    assert!(report.contains("Evidence retrieval"));
    assert!(report.contains("Overstatement scoring"));
    assert!(d.join("report.txt").exists());
}

#[test]
fn report_renders_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(fixtures().join("reference")).unwrap() {
        let path = entry.unwrap().path();
        fs::copy(&path, dir.path().join(path.file_name().unwrap())).unwrap();
    }
    let text = ok(overclaim(&["report", "--out", dir.path().to_str().unwrap()]));
    assert_eq!(text, fs::read_to_string(fixtures().join("expected_report.txt")).unwrap());
}
