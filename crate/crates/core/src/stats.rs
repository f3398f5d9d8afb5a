//! Agreement and robustness statistics: Krippendorff's alpha, leave-one-out
//! consensus agreement, Welch's t-test, leave-one-model-out score shifts,
//! review-context shift analysis, and Pearson correlation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::claims::majority_vote;
use crate::error::{Error, Result};
use crate::scoring::{stable_mean, ScoreContext, ScoreRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Nominal,
    Ordinal,
}

/// Items × annotators table of category codes; `None` marks a missing
/// cell. For the ordinal level, codes are ordered by their integer value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityMatrix {
    pub items: Vec<String>,
    pub annotators: Vec<String>,
    pub values: Vec<Vec<Option<i64>>>,
    pub level: Level,
}

impl ReliabilityMatrix {
    pub fn new(
        items: Vec<String>,
        annotators: Vec<String>,
        values: Vec<Vec<Option<i64>>>,
        level: Level,
    ) -> Result<Self> {
        if annotators.len() < 2 {
            return Err(Error::Precondition("alpha needs at least 2 annotators".into()));
        }
        if values.len() != items.len() || values.iter().any(|row| row.len() != annotators.len()) {
            return Err(Error::Precondition(format!(
                "matrix shape does not match {} items x {} annotators",
                items.len(),
                annotators.len()
            )));
        }
        Ok(Self {
            items,
            annotators,
            values,
            level,
        })
    }

    /// Builds a matrix from unnamed rows, naming items and annotators by index.
    pub fn from_rows(values: Vec<Vec<Option<i64>>>, level: Level) -> Result<Self> {
        let width = values.first().map_or(0, Vec::len);
        Self::new(
            (0..values.len()).map(|i| i.to_string()).collect(),
            (0..width).map(|i| i.to_string()).collect(),
            values,
            level,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    /// Expected disagreement was zero (a single category); alpha set to 1.
    pub degenerate: bool,
    /// Number of pairable values.
    pub n_pairable: f64,
}

/// Krippendorff's alpha via the coincidence matrix. Units with fewer than
/// two values are not pairable and are ignored.
pub fn krippendorff_alpha(matrix: &ReliabilityMatrix) -> Result<AlphaResult> {
    let categories: Vec<i64> = matrix
        .values
        .iter()
        .flatten()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<i64, usize> = categories.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let k = categories.len();

    let mut coincidence = vec![vec![0.0f64; k]; k];
    for row in &matrix.values {
        let vals: Vec<usize> = row.iter().flatten().map(|v| index[v]).collect();
        let m = vals.len();
        if m < 2 {
            continue;
        }
        let w = 1.0 / (m - 1) as f64;
        for (i, &a) in vals.iter().enumerate() {
            for (j, &b) in vals.iter().enumerate() {
                if i != j {
                    coincidence[a][b] += w;
                }
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    if n < 2.0 {
        return Err(Error::Undefined("alpha needs at least one unit with two values".into()));
    }

    let delta = distance_table(matrix.level, &marginals);
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            observed += coincidence[c][d] * delta[c][d];
            expected += marginals[c] * marginals[d] * delta[c][d];
        }
    }
    if expected == 0.0 {
        return Ok(AlphaResult {
            alpha: 1.0,
            degenerate: true,
            n_pairable: n,
        });
    }
    Ok(AlphaResult {
        alpha: 1.0 - (n - 1.0) * observed / expected,
        degenerate: false,
        n_pairable: n,
    })
}

/// Squared distances between category indices. Ordinal distance is the
/// rank-based metric over the marginal counts.
#[allow(clippy::needless_range_loop)]
fn distance_table(level: Level, marginals: &[f64]) -> Vec<Vec<f64>> {
    let k = marginals.len();
    let mut delta = vec![vec![0.0; k]; k];
    for c in 0..k {
        for d in 0..k {
            if c == d {
                continue;
            }
            delta[c][d] = match level {
                Level::Nominal => 1.0,
                Level::Ordinal => {
                    let (lo, hi) = if c < d { (c, d) } else { (d, c) };
                    let span: f64 = marginals[lo..=hi].iter().sum();
                    let x = span - (marginals[lo] + marginals[hi]) / 2.0;
                    x * x
                }
            };
        }
    }
    delta
}

/// Nominal alpha between the full-panel majority label and the majority
/// label without `excluded`, treated as two coders over the items.
pub fn leave_one_out_agreement<L: Ord + Clone>(
    votes: &[BTreeMap<String, L>],
    excluded: &str,
    tie_break: &L,
) -> Result<AlphaResult> {
    let annotators: BTreeSet<&String> = votes.iter().flat_map(|v| v.keys()).collect();
    if annotators.len() < 3 {
        return Err(Error::Precondition(
            "leave-one-out agreement needs at least 3 annotators".into(),
        ));
    }
    let mut codes: BTreeMap<L, i64> = BTreeMap::new();
    let mut code = |l: L| {
        let next = codes.len() as i64;
        *codes.entry(l).or_insert(next)
    };
    let mut rows = Vec::new();
    for item in votes {
        if item.is_empty() {
            continue;
        }
        let full = majority_vote(item.values(), tie_break)?;
        let rest: Vec<&L> = item
            .iter()
            .filter(|(a, _)| a.as_str() != excluded)
            .map(|(_, l)| l)
            .collect();
        let reduced = if rest.is_empty() {
            None
        } else {
            Some(code(majority_vote(rest, tie_break)?))
        };
        rows.push(vec![Some(code(full)), reduced]);
    }
    krippendorff_alpha(&ReliabilityMatrix::from_rows(rows, Level::Nominal)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub dof: f64,
    /// Two-sided p-value; `None` when the standard error is zero.
    pub p: Option<f64>,
    pub degenerate: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Unequal-variance t-test with Welch–Satterthwaite degrees of freedom.
/// When both samples are constant the standard error is zero: the result
/// is flagged degenerate with no p-value (t is 0 for equal means, otherwise
/// infinite).
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Precondition("Welch's t-test needs at least 2 values per sample".into()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (sample_variance(a) / a.len() as f64, sample_variance(b) / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let t = if ma == mb { 0.0 } else { (ma - mb).signum() * f64::INFINITY };
        return Ok(WelchResult {
            t,
            dof: (a.len() + b.len() - 2) as f64,
            p: None,
            degenerate: true,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    Ok(WelchResult {
        t,
        dof,
        p: Some(t_two_sided_p(t, dof)),
        degenerate: false,
    })
}

/// Two-sided tail probability of Student's t: I_{v/(v+t^2)}(v/2, 1/2).
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = dof / (dof + t * t);
    regularized_incomplete_beta(x, dof / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// I_x(a, b) by the continued fraction (modified Lentz), using the
/// symmetry relation where the fraction converges slowly.
fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Product-moment correlation. Errors when either sample is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Precondition("Pearson needs two samples of equal length >= 2".into()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("Pearson correlation of a constant sample".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn per_claim_means<'a>(records: impl Iterator<Item = &'a ScoreRecord>) -> BTreeMap<String, f64> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(r.claim_id.as_str()).or_default().push(r.score);
    }
    groups
        .into_iter()
        .filter_map(|(c, s)| stable_mean(&s).map(|m| (c.to_string(), m)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooShift {
    pub excluded: String,
    pub delta_mean: f64,
    pub mad: f64,
    pub welch: WelchResult,
    pub n_claims: usize,
    /// Claims whose only records came from the excluded annotator.
    pub n_dropped: usize,
}

/// Recomputes per-claim soft labels without `excluded` and compares them to
/// the full-panel labels.
pub fn loo_score_shift(records: &[ScoreRecord], excluded: &str) -> Result<LooShift> {
    if !records.iter().any(|r| r.annotator_id == excluded) {
        return Err(Error::Precondition(format!("annotator {excluded} contributed no records")));
    }
    let baseline = per_claim_means(records.iter());
    let reduced = per_claim_means(records.iter().filter(|r| r.annotator_id != excluded));
    let mut base = Vec::new();
    let mut new = Vec::new();
    for (claim, b) in &baseline {
        if let Some(n) = reduced.get(claim) {
            base.push(*b);
            new.push(*n);
        }
    }
    let n_dropped = baseline.len() - base.len();
    if base.is_empty() {
        return Err(Error::Undefined(format!("no claims left after excluding {excluded}")));
    }
    let deltas: Vec<f64> = new.iter().zip(&base).map(|(n, b)| n - b).collect();
    Ok(LooShift {
        excluded: excluded.to_string(),
        delta_mean: mean(&new) - mean(&base),
        mad: mean(&deltas.iter().map(|d| d.abs()).collect::<Vec<_>>()),
        welch: welch_t_test(&new, &base)?,
        n_claims: base.len(),
        n_dropped,
    })
}

/// Half-open score bands `[lo, hi)`; a band ending at 1.0 also includes 1.0.
pub const DEFAULT_BANDS: [(f64, f64); 4] = [(0.0, 0.3), (0.3, 0.5), (0.5, 0.7), (0.7, 1.0)];

/// Differences below this count as unchanged.
pub const SAME_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub label: String,
    pub n: usize,
    pub delta_mean: f64,
    pub delta_median: f64,
    pub mean_abs_delta: f64,
    pub pct_up: f64,
    pub pct_down: f64,
    pub pct_same: f64,
}

impl ShiftRow {
    fn from_deltas(label: String, deltas: &[f64]) -> Self {
        let n = deltas.len();
        if n == 0 {
            return Self {
                label,
                n,
                delta_mean: 0.0,
                delta_median: 0.0,
                mean_abs_delta: 0.0,
                pct_up: 0.0,
                pct_down: 0.0,
                pct_same: 0.0,
            };
        }
        let pct = |k: usize| 100.0 * k as f64 / n as f64;
        let up = deltas.iter().filter(|&&d| d >= SAME_EPSILON).count();
        let down = deltas.iter().filter(|&&d| d <= -SAME_EPSILON).count();
        Self {
            label,
            n,
            delta_mean: mean(deltas),
            delta_median: median(deltas),
            mean_abs_delta: mean(&deltas.iter().map(|d| d.abs()).collect::<Vec<_>>()),
            pct_up: pct(up),
            pct_down: pct(down),
            pct_same: pct(n - up - down),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub overall: ShiftRow,
    /// `None` when either score vector is constant.
    pub pearson_r: Option<f64>,
    pub bands: Vec<ShiftRow>,
}

pub fn band_label(lo: f64, hi: f64) -> String {
    if hi >= 1.0 {
        format!("[{lo:.1}, {hi:.1}]")
    } else {
        format!("[{lo:.1}, {hi:.1})")
    }
}

fn in_band(score: f64, (lo, hi): (f64, f64)) -> bool {
    score >= lo && (score < hi || (hi >= 1.0 && score <= hi))
}

/// Compares review-informed to paper-only per-claim scores, globally and
/// within bands of the paper-only score.
pub fn review_shift_report(
    paper_only: &BTreeMap<String, f64>,
    review_informed: &BTreeMap<String, f64>,
    bands: &[(f64, f64)],
) -> Result<ShiftReport> {
    let a: BTreeSet<&String> = paper_only.keys().collect();
    let b: BTreeSet<&String> = review_informed.keys().collect();
    let missing: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::KeyMismatch { missing });
    }
    let pairs: Vec<(f64, f64)> = paper_only
        .iter()
        .map(|(k, &p)| (p, review_informed[k]))
        .collect();
    let deltas: Vec<f64> = pairs.iter().map(|(p, r)| r - p).collect();
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let band_rows = bands
        .iter()
        .map(|&band| {
            let d: Vec<f64> = pairs
                .iter()
                .zip(&deltas)
                .filter(|((p, _), _)| in_band(*p, band))
                .map(|(_, d)| *d)
                .collect();
            ShiftRow::from_deltas(band_label(band.0, band.1), &d)
        })
        .collect();
    Ok(ShiftReport {
        overall: ShiftRow::from_deltas("all".into(), &deltas),
        pearson_r: pearson(&xs, &ys).ok(),
        bands: band_rows,
    })
}

/// Per-claim paper-only means and per-claim review-informed means (over
/// every annotator and review), restricted to claims that have both.
pub fn context_means(records: &[ScoreRecord]) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let mut paper = per_claim_means(records.iter().filter(|r| r.context == ScoreContext::PaperOnly));
    let mut review = per_claim_means(records.iter().filter(|r| r.context != ScoreContext::PaperOnly));
    paper.retain(|k, _| review.contains_key(k));
    review.retain(|k, _| paper.contains_key(k));
    (paper, review)
}

/// Mean over unordered annotator pairs of the Pearson correlation between
/// their per-claim mean scores, over claims both scored. Pairs with fewer
/// than 2 shared claims or a constant vector are skipped.
pub fn mean_pairwise_pearson(records: &[ScoreRecord], keep: impl Fn(&ScoreContext) -> bool) -> Option<f64> {
    let mut by_annotator: BTreeMap<&str, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| keep(&r.context)) {
        by_annotator.entry(r.annotator_id.as_str()).or_default().push(r);
    }
    let means: Vec<BTreeMap<String, f64>> = by_annotator
        .values()
        .map(|rs| per_claim_means(rs.iter().copied()))
        .collect();
    let mut rs = Vec::new();
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            let (x, y): (Vec<f64>, Vec<f64>) = means[i]
                .iter()
                .filter_map(|(c, &a)| means[j].get(c).map(|&b| (a, b)))
                .unzip();
            if x.len() >= 2 {
                if let Ok(r) = pearson(&x, &y) {
                    rs.push(r);
                }
            }
        }
    }
    if rs.is_empty() {
        None
    } else {
        Some(mean(&rs))
    }
}
