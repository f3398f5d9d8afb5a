//! Aligned plain-text tables for dataset statistics, retrieval and
//! regression results, and the robustness analyses. Rendering reads only
//! files already on disk.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetStats, Split, SplitStats};
use crate::error::{Error, Result};
use crate::io::read_json;
use crate::ireval::{percent, RetrievalReport};
use crate::regeval::RegressionReport;
use crate::stats::{LooShift, ShiftReport, ShiftRow};
use crate::summary::{LooAgreementRow, StatsSummary};

pub const DATASET_STATS_FILE: &str = "dataset_stats.json";
pub const RETRIEVAL_RESULTS_FILE: &str = "retrieval_results.json";
pub const OVERSTATEMENT_RESULTS_FILE: &str = "overstatement_results.json";
pub const STATS_FILE: &str = "stats.json";

const MISSING: &str = "—";

#[derive(Debug, Clone)]
enum Row {
    Cells(Vec<String>),
    Section(String),
}

/// Column-aligned table: first column left-aligned, the rest right-aligned,
/// a dashed rule under the header.
#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Row>,
}

impl Table {
    pub fn new(headers: Vec<String>) -> Self {
        Self {
            headers,
            rows: Vec::new(),
        }
    }

    pub fn with_headers(headers: &[&str]) -> Self {
        Self::new(headers.iter().map(|h| h.to_string()).collect())
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(Row::Cells(row));
    }

    /// A full-width group heading such as a model family.
    pub fn section(&mut self, title: impl Into<String>) {
        self.rows.push(Row::Section(title.into()));
    }

    pub fn render(&self) -> String {
        let width = |s: &str| s.chars().count();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| width(h)).collect();
        for row in &self.rows {
            if let Row::Cells(cells) = row {
                for (i, c) in cells.iter().enumerate() {
                    if i >= widths.len() {
                        widths.push(0);
                    }
                    widths[i] = widths[i].max(width(c));
                }
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, w) in widths.iter().enumerate() {
                let c = cells.get(i).map_or("", String::as_str);
                let pad = " ".repeat(w - width(c));
                if i == 0 {
                    s.push_str(c);
                    s.push_str(&pad);
                } else {
                    s.push_str("  ");
                    s.push_str(&pad);
                    s.push_str(c);
                }
            }
            s.trim_end().to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for row in &self.rows {
            match row {
                Row::Cells(cells) => out.push_str(&line(cells)),
                Row::Section(t) => out.push_str(t),
            }
            out.push('\n');
        }
        out
    }
}

/// `1234567` -> `"1,234,567"`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Explicit sign, typographic minus.
pub fn signed(x: f64, decimals: usize) -> String {
    let body = format!("{:.*}", decimals, x.abs());
    let zero = body.chars().all(|c| c == '0' || c == '.');
    if x < 0.0 && !zero {
        format!("\u{2212}{body}")
    } else {
        format!("+{body}")
    }
}

fn opt(x: Option<f64>, decimals: usize) -> String {
    x.map_or(MISSING.to_string(), |v| format!("{v:.decimals$}"))
}

/// Welch p as `< 0.01` below the threshold, four decimals otherwise.
pub fn p_value(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 0.01 => "< 0.01".to_string(),
        Some(p) => format!("{p:.4}"),
        None => MISSING.to_string(),
    }
}

pub fn render_dataset_stats(stats: &DatasetStats) -> String {
    let columns: Vec<SplitStats> = Split::ALL.iter().map(|s| *stats.get(*s)).chain([stats.total()]).collect();
    let row = |label: &str, f: fn(&SplitStats) -> usize| {
        std::iter::once(label.to_string())
            .chain(columns.iter().map(|c| thousands(f(c))))
            .collect::<Vec<_>>()
    };
    let mut t = Table::with_headers(&["Split", "Train", "Dev", "Test", "Total"]);
    t.push(row("Paper IDs", |s| s.papers));
    t.push(row("Claims", |s| s.claims));
    t.push(row("Evidence", |s| s.evidence));
    t.push(row("Scores", |s| s.scores));

    let mut b = Table::with_headers(&["Evidence Type", "Train", "Dev", "Test", "Total"]);
    b.push(row("Supporting", |s| s.supporting));
    b.push(row("  TEXT", |s| s.supporting_text));
    b.push(row("  IMAGE", |s| s.supporting_image));
    b.push(row("Not-supporting", |s| s.not_supporting));
    b.push(row("  TEXT", |s| s.not_supporting_text));
    b.push(row("  IMAGE", |s| s.not_supporting_image));
    format!("{}\n{}", t.render(), b.render())
}

/// One model's result, optionally under a group heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult<T> {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub report: T,
}

fn grouped<T>(t: &mut Table, entries: &[ModelResult<T>], mut row: impl FnMut(&ModelResult<T>) -> Vec<String>) {
    let mut current: Option<&str> = None;
    for e in entries {
        if let Some(g) = e.group.as_deref() {
            if current != Some(g) {
                t.section(g);
                current = Some(g);
            }
        }
        t.push(row(e));
    }
}

/// Retrieval results as percentages with two decimals; cutoffs follow the
/// first entry.
pub fn render_retrieval(entries: &[ModelResult<RetrievalReport>]) -> String {
    let Some(first) = entries.first() else {
        return String::new();
    };
    let ks: Vec<usize> = first.report.recall.keys().copied().collect();
    let mut headers = vec!["Model".to_string(), "MAP".into(), "MRR".into()];
    headers.extend(ks.iter().map(|k| format!("R@{k}")));
    headers.extend(ks.iter().map(|k| format!("N@{k}")));
    let mut t = Table::new(headers);
    grouped(&mut t, entries, |e| {
        let r = &e.report;
        let mut row = vec![e.name.clone(), percent(r.map), percent(r.mrr)];
        row.extend(ks.iter().map(|k| r.recall.get(k).map_or(MISSING.to_string(), |v| percent(*v))));
        row.extend(ks.iter().map(|k| r.ndcg.get(k).map_or(MISSING.to_string(), |v| percent(*v))));
        row
    });
    t.render()
}

pub fn render_regression(entries: &[ModelResult<RegressionReport>]) -> String {
    let mut t = Table::with_headers(&["Model", "CCC", "MAE", "ρ"]);
    grouped(&mut t, entries, |e| {
        vec![
            e.name.clone(),
            format!("{:.3}", e.report.ccc),
            format!("{:.3}", e.report.mae),
            opt(e.report.pearson, 3),
        ]
    });
    t.render()
}

pub fn render_loo_agreement(rows: &[LooAgreementRow]) -> String {
    let mut t = Table::with_headers(&["Excluded Model", "Own", "Text", "Image"]);
    for r in rows {
        t.push(vec![r.excluded.clone(), opt(r.own, 4), opt(r.text, 4), opt(r.image, 4)]);
    }
    t.render()
}

pub fn render_loo_shifts(rows: &[LooShift]) -> String {
    let mut t = Table::with_headers(&["Model", "Δ Mean", "MAD", "Welch p"]);
    for r in rows {
        t.push(vec![
            r.excluded.clone(),
            signed(r.delta_mean, 4),
            format!("{:.4}", r.mad),
            p_value(r.welch.p),
        ]);
    }
    t.render()
}

fn shift_cells(r: &ShiftRow) -> Vec<String> {
    vec![
        r.label.clone(),
        signed(r.delta_mean, 4),
        signed(r.delta_median, 4),
        format!("{:.4}", r.mean_abs_delta),
        format!("{:.1} / {:.1} / {:.1}", r.pct_up, r.pct_down, r.pct_same),
    ]
}

pub fn render_review_shift(report: &ShiftReport) -> String {
    let mut t = Table::with_headers(&["Initial score band", "Δμ", "Median Δ", "|Δ|", "↑ / ↓ / = (%)"]);
    for band in &report.bands {
        t.push(shift_cells(band));
    }
    let o = &report.overall;
    let mut s = t.render();
    let _ = writeln!(
        s,
        "Overall: Δμ = {}, median = {}, up/down/same = {:.1}% / {:.1}% / {:.1}%, Pearson r = {}",
        signed(o.delta_mean, 4),
        signed(o.delta_median, 4),
        o.pct_up,
        o.pct_down,
        o.pct_same,
        opt(report.pearson_r, 2)
    );
    s
}

pub fn render_stats(summary: &StatsSummary) -> String {
    let mut s = String::new();
    let mut agreement = Table::with_headers(&["Setting", "Level", "α"]);
    for (name, level, a) in [
        ("Own statement", "nominal", summary.claim_alpha),
        ("Text evidence", "nominal", summary.text_alpha),
        ("Visual evidence", "nominal", summary.image_alpha),
        ("Overstatement score", "ordinal", summary.score_alpha),
    ] {
        let value = a.map_or(MISSING.to_string(), |a| {
            if a.degenerate {
                format!("{:.4} (degenerate)", a.alpha)
            } else {
                format!("{:.4}", a.alpha)
            }
        });
        agreement.push(vec![name.into(), level.into(), value]);
    }
    s.push_str("Panel agreement\n");
    s.push_str(&agreement.render());
    if !summary.loo_agreement.is_empty() {
        s.push_str("\nLeave-one-model-out consensus agreement (Krippendorff's α)\n");
        s.push_str(&render_loo_agreement(&summary.loo_agreement));
    }
    if !summary.loo_shifts.is_empty() {
        s.push_str("\nLeave-one-model-out score shift\n");
        s.push_str(&render_loo_shifts(&summary.loo_shifts));
    }
    if let Some(shift) = &summary.review_shift {
        s.push_str("\nReview-context shift by initial score\n");
        s.push_str(&render_review_shift(shift));
    }
    let p = &summary.pairwise_pearson;
    if p.paper_only.is_some() || p.review_informed.is_some() || p.relative_change_pct.is_some() {
        let _ = writeln!(
            s,
            "\nMean pairwise Pearson across annotators: paper-only {}, review-informed {}, change {}",
            opt(p.paper_only, 4),
            opt(p.review_informed, 4),
            p.relative_change_pct.map_or(MISSING.to_string(), |c| format!("{}%", signed(c, 1)))
        );
    }
    s
}

/// Renders every known result file present in `dir`.
pub fn render_all(dir: &Path) -> Result<String> {
    let mut parts = Vec::new();
    let path = dir.join(DATASET_STATS_FILE);
    if path.exists() {
        let stats: DatasetStats = read_json(&path)?;
        parts.push(format!("Dataset statistics\n{}", render_dataset_stats(&stats)));
    }
    let path = dir.join(RETRIEVAL_RESULTS_FILE);
    if path.exists() {
        let entries: Vec<ModelResult<RetrievalReport>> = read_json(&path)?;
        parts.push(format!("Evidence retrieval\n{}", render_retrieval(&entries)));
    }
    let path = dir.join(OVERSTATEMENT_RESULTS_FILE);
    if path.exists() {
        let entries: Vec<ModelResult<RegressionReport>> = read_json(&path)?;
        parts.push(format!("Overstatement scoring\n{}", render_regression(&entries)));
    }
    let path = dir.join(STATS_FILE);
    if path.exists() {
        let summary: StatsSummary = read_json(&path)?;
        parts.push(render_stats(&summary));
    }
    if parts.is_empty() {
        return Err(Error::Precondition(format!(
            "{} contains none of {DATASET_STATS_FILE}, {RETRIEVAL_RESULTS_FILE}, {OVERSTATEMENT_RESULTS_FILE}, {STATS_FILE}",
            dir.display()
        )));
    }
    Ok(parts.join("\n"))
}
