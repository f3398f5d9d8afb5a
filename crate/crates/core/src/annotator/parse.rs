//! Response-tag parsers. Total over arbitrary text: every input yields a
//! value or a `ParseFailure`, never a panic. When a tag occurs several times
//! the last well-formed occurrence wins.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceId;

/// Scores within this distance of 0 or 1 are clamped onto the boundary.
pub const SCORE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub reason: String,
}

impl ParseFailure {
    fn new(reason: impl Into<String>) -> Self {
        Self {
            reason: reason.into(),
        }
    }
}

/// Body of the last `<tag>...</tag>` pair (tag name matched ASCII
/// case-insensitively), with the byte offset just past its closing tag.
fn last_tag<'a>(raw: &'a str, tag: &str) -> Option<(&'a str, usize)> {
    // ASCII lowering keeps byte offsets aligned with `raw`.
    let lower = raw.to_ascii_lowercase();
    let open = format!("<{}>", tag.to_ascii_lowercase());
    let close = format!("</{}>", tag.to_ascii_lowercase());
    let close_at = lower.rfind(&close)?;
    let open_at = lower[..close_at].rfind(&open)?;
    let body = &raw[open_at + open.len()..close_at];
    Some((body, close_at + close.len()))
}

fn strip_decoration(s: &str) -> &str {
    s.trim()
        .trim_matches(|c: char| matches!(c, '{' | '}' | '`' | '"' | '\'' | '*') || c.is_whitespace())
}

/// Extracts a label from the last `<Label>` tag; it must be one of `allowed`
/// (compared case-insensitively, returned in its canonical spelling).
pub fn parse_label_tag(raw: &str, allowed: &[&str]) -> Result<String, ParseFailure> {
    let (body, _) = last_tag(raw, "label").ok_or_else(|| ParseFailure::new("no <Label> tag"))?;
    let value = strip_decoration(body);
    allowed
        .iter()
        .find(|a| a.eq_ignore_ascii_case(value))
        .map(|a| a.to_string())
        .ok_or_else(|| ParseFailure::new(format!("label {value:?} not in {allowed:?}")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSelection {
    pub ids: Vec<SentenceId>,
    pub warnings: Vec<String>,
}

/// Extracts sentence numbers from the last `<Label>` tag, deduplicated and
/// sorted. Numbers outside `valid_ids` are dropped with a warning; an empty
/// tag is a valid "no evidence" answer.
pub fn parse_sentence_numbers(
    raw: &str,
    valid_ids: &BTreeSet<SentenceId>,
) -> Result<SentenceSelection, ParseFailure> {
    let (body, _) = last_tag(raw, "label").ok_or_else(|| ParseFailure::new("no <Label> tag"))?;
    let mut ids = BTreeSet::new();
    let mut warnings = Vec::new();
    for token in body.split(|c: char| c.is_whitespace() || c == ',' || c == ';') {
        let token = token.trim_matches(|c: char| matches!(c, '[' | ']' | '(' | ')' | '{' | '}' | '#' | '.' | ':' | '`'));
        if token.is_empty() {
            continue;
        }
        let id: SentenceId = token
            .parse()
            .map_err(|_| ParseFailure::new(format!("non-numeric token {token:?} in <Label>")))?;
        if valid_ids.contains(&id) {
            ids.insert(id);
        } else {
            warnings.push(format!("sentence number {id} is outside the presented context"));
        }
    }
    Ok(SentenceSelection {
        ids: ids.into_iter().collect(),
        warnings,
    })
}

/// Extracts `(score, justification)`. The justification comes from the last
/// `<justification>` tag or, failing that, the prose after the score tag.
pub fn parse_score_tag(raw: &str) -> Result<(f64, String), ParseFailure> {
    let (body, score_end) =
        last_tag(raw, "score").ok_or_else(|| ParseFailure::new("no <score> tag"))?;
    let text = strip_decoration(body);
    let score: f64 = text
        .parse()
        .map_err(|_| ParseFailure::new(format!("score {text:?} is not a number")))?;
    if !score.is_finite() {
        return Err(ParseFailure::new(format!("score {text:?} is not finite")));
    }
    let score = if !(-SCORE_EPSILON..=1.0 + SCORE_EPSILON).contains(&score) {
        return Err(ParseFailure::new(format!("score {score} outside [0, 1]")));
    } else {
        score.clamp(0.0, 1.0)
    };
    let justification = match last_tag(raw, "justification") {
        Some((body, _)) => body.trim().to_string(),
        None => raw[score_end..].trim().to_string(),
    };
    Ok((score, justification))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const OWN: &[&str] = &["original_statement", "not_original_statement"];
    const REL: &[&str] = &["relevant", "not_relevant"];

    fn ids(range: std::ops::RangeInclusive<u32>) -> BTreeSet<u32> {
        range.collect()
    }

    #[test]
    fn label_basic() {
        assert_eq!(
            parse_label_tag("reasoning...<Label>original_statement</Label>", OWN).unwrap(),
            "original_statement"
        );
        assert!(parse_label_tag("<Label>maybe</Label>", REL).is_err());
        assert!(parse_label_tag("no tag here", REL).is_err());
        assert!(parse_label_tag("<Label>relevant", REL).is_err());
        assert_eq!(parse_label_tag("<label>{Relevant}</label>", REL).unwrap(), "relevant");
    }

    #[test]
    fn last_label_wins() {
        let raw = "Draft: <Label>not_relevant</Label>\nOn reflection: <Label>relevant</Label>";
        assert_eq!(parse_label_tag(raw, REL).unwrap(), "relevant");
        let raw = "<Label>relevant</Label> then <Label>unsure</Label>";
        assert!(parse_label_tag(raw, REL).is_err());
    }

    #[test]
    fn sentence_numbers() {
        let sel = parse_sentence_numbers("<Label>\n3\n7\n3\n</Label>", &ids(0..=10)).unwrap();
        assert_eq!(sel.ids, vec![3, 7]);
        assert!(sel.warnings.is_empty());

        let sel = parse_sentence_numbers("<Label></Label>", &ids(0..=10)).unwrap();
        assert!(sel.ids.is_empty());

        let sel = parse_sentence_numbers("<Label>12</Label>", &ids(0..=10)).unwrap();
        assert!(sel.ids.is_empty());
        assert_eq!(sel.warnings.len(), 1);

        assert!(parse_sentence_numbers("<Label>3\nfour</Label>", &ids(0..=10)).is_err());
        let sel = parse_sentence_numbers("<Label>[4], 5; #9.</Label>", &ids(0..=10)).unwrap();
        assert_eq!(sel.ids, vec![4, 5, 9]);
    }

    #[test]
    fn scores() {
        let (s, j) = parse_score_tag("<score>0.85</score><justification>Too strong.</justification>").unwrap();
        assert_eq!(s, 0.85);
        assert_eq!(j, "Too strong.");

        let (s, _) = parse_score_tag("<score>1.0000000001</score>").unwrap();
        assert_eq!(s, 1.0);
        let (s, _) = parse_score_tag("<score>-0.0000000001</score>").unwrap();
        assert_eq!(s, 0.0);

        assert!(parse_score_tag("<score>1.7</score>").is_err());
        assert!(parse_score_tag("<score>NaN</score>").is_err());
        assert!(parse_score_tag("<score></score>").is_err());
        assert!(parse_score_tag("score: 0.5").is_err());

        let (s, j) = parse_score_tag("<score>{0.2}</score>\nThe wording is mostly hedged.").unwrap();
        assert_eq!(s, 0.2);
        assert_eq!(j, "The wording is mostly hedged.");
    }

    proptest! {
        #[test]
        fn parsers_are_total(raw in ".{0,300}") {
            let _ = parse_label_tag(&raw, REL);
            let _ = parse_sentence_numbers(&raw, &ids(0..=50));
            if let Ok((s, _)) = parse_score_tag(&raw) {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }

        #[test]
        fn parsers_total_on_tag_soup(raw in "(<|>|/|Label|label|score|justification|[0-9. ]|x){0,80}") {
            let _ = parse_label_tag(&raw, REL);
            let _ = parse_sentence_numbers(&raw, &ids(0..=50));
            let _ = parse_score_tag(&raw);
        }
    }
}
