//! Rule-based sentence segmentation for scientific prose.
//!
//! A boundary is placed after terminal punctuation (`.`, `!`, `?`, optionally
//! followed by closing quotes or brackets) when whitespace follows and the
//! next token can start a sentence. Periods are not boundaries after known
//! abbreviations (`et al.`, `Fig.`, `e.g.`), after initials (`J.`, `U.S.`), or
//! inside a parenthetical such as a citation. A blank line always ends a
//! sentence.

use std::collections::HashSet;

/// Anything that can cut prose into sentences.
///
/// Implementations must be conservative: joining the output with single
/// spaces must reproduce the input modulo whitespace, and no returned
/// sentence may be empty.
pub trait SentenceSegmenter: Send + Sync {
    fn split(&self, text: &str) -> Vec<String>;
}

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "al", "e.g", "i.e", "cf", "vs", "viz", "fig", "figs", "eq", "eqs", "sec", "secs", "tab",
    "tabs", "ref", "refs", "no", "nos", "approx", "resp", "dr", "mr", "mrs", "ms", "prof", "st",
    "jr", "sr", "vol", "pp", "ch", "app", "appx", "thm", "lem", "def", "alg", "prop", "cor",
    "est", "incl", "w.r.t", "a.k.a", "et", "ca", "ed", "eds",
];

#[derive(Debug, Clone)]
pub struct RuleSegmenter {
    abbreviations: HashSet<String>,
}

impl Default for RuleSegmenter {
    fn default() -> Self {
        Self {
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RuleSegmenter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an abbreviation (without its trailing period, case-insensitive).
    pub fn with_abbreviation(mut self, abbreviation: &str) -> Self {
        self.abbreviations
            .insert(abbreviation.trim_end_matches('.').to_lowercase());
        self
    }

    fn is_abbreviation(&self, token: &str) -> bool {
        let token = token
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .trim_end_matches('.');
        if token.is_empty() {
            return false;
        }
        if self.abbreviations.contains(&token.to_lowercase()) {
            return true;
        }
        // Dotted initials: "U.S", "A.B.C"
        token.contains('.') && token.split('.').all(is_single_capital)
    }

    /// A lone capital like `J.` counts as an initial only when a name-like
    /// word follows and the preceding word is not lower-case prose, so
    /// "J. Smith proposed" stays whole while "we propose X. Then" splits.
    fn is_initial(token: &str, prev: Option<&str>, next: &str) -> bool {
        let token = token.trim_start_matches(|c: char| !c.is_alphanumeric());
        if !is_single_capital(token) {
            return false;
        }
        let mut next_chars = next.chars();
        let name_like = next_chars.next().is_some_and(char::is_uppercase)
            && next.chars().count() >= 2
            && next_chars.all(|c| c.is_lowercase() || c == '-');
        let prev_ok = match prev {
            None => true,
            Some(p) => {
                p.chars().next().is_some_and(|c| !c.is_lowercase())
                    || matches!(p, "by" | "and" | "with" | "of")
            }
        };
        name_like && prev_ok
    }
}

fn is_single_capital(part: &str) -> bool {
    let mut chars = part.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_uppercase())
}

fn is_closing(c: char) -> bool {
    matches!(c, ')' | ']' | '"' | '\'' | '”' | '’' | '»')
}

fn can_start_sentence(c: char) -> bool {
    c.is_uppercase()
        || c.is_ascii_digit()
        || matches!(c, '(' | '[' | '"' | '\'' | '“' | '‘' | '«')
}

impl SentenceSegmenter for RuleSegmenter {
    fn split(&self, text: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut cuts = Vec::new();
        let mut depth: usize = 0;
        let mut token_start = 0usize;
        let mut prev_token: Option<(usize, usize)> = None;
        let mut i = 0;

        while i < chars.len() {
            let (pos, c) = chars[i];
            match c {
                '(' | '[' => depth += 1,
                ')' | ']' => depth = depth.saturating_sub(1),
                _ => {}
            }

            if c.is_whitespace() {
                let mut j = i;
                let mut newlines = 0;
                while j < chars.len() && chars[j].1.is_whitespace() {
                    if chars[j].1 == '\n' {
                        newlines += 1;
                    }
                    j += 1;
                }
                if newlines >= 2 {
                    cuts.push(pos);
                    depth = 0;
                }
                if newlines >= 2 {
                    prev_token = None;
                } else if token_start < i {
                    prev_token = Some((chars[token_start].0, pos));
                }
                token_start = j;
                i = j;
                continue;
            }

            if matches!(c, '.' | '!' | '?') {
                let token = &text[chars[token_start].0..pos];
                let mut j = i + 1;
                while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                    j += 1;
                }
                while j < chars.len() && is_closing(chars[j].1) {
                    match chars[j].1 {
                        ')' | ']' => depth = depth.saturating_sub(1),
                        _ => {}
                    }
                    j += 1;
                }
                let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
                let followed_by_space = j >= chars.len() || chars[j].1.is_whitespace();
                if followed_by_space && j < chars.len() {
                    let mut k = j;
                    while k < chars.len() && chars[k].1.is_whitespace() {
                        k += 1;
                    }
                    let next = chars.get(k).map(|&(_, ch)| ch);
                    let next_word_end = chars[k..]
                        .iter()
                        .find(|&&(_, ch)| ch.is_whitespace() || matches!(ch, '.' | ',' | ';' | ':' | '!' | '?'))
                        .map_or(text.len(), |&(p, _)| p);
                    let next_word = chars.get(k).map_or("", |&(p, _)| &text[p..next_word_end]);
                    let prev = prev_token.map(|(a, b)| &text[a..b]);
                    let guarded = depth > 0
                        || (c == '.'
                            && (self.is_abbreviation(token) || Self::is_initial(token, prev, next_word)));
                    if let Some(next) = next {
                        if !guarded && can_start_sentence(next) {
                            cuts.push(end);
                        }
                    }
                }
                i = j;
                continue;
            }
            i += 1;
        }

        let mut out = Vec::new();
        let mut start = 0;
        for cut in cuts.into_iter().chain(std::iter::once(text.len())) {
            if cut < start {
                continue;
            }
            let piece = text[start..cut].trim();
            if !piece.is_empty() {
                out.push(piece.to_string());
            }
            start = cut;
        }
        out
    }
}

/// Collapses every whitespace run to a single space and trims the ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split(text: &str) -> Vec<String> {
        RuleSegmenter::default().split(text)
    }

    #[test]
    fn two_simple_sentences() {
        assert_eq!(split("A. B."), vec!["A.", "B."]);
        assert_eq!(
            split("We train a model. It works well."),
            vec!["We train a model.", "It works well."]
        );
    }

    #[test]
    fn empty_input() {
        assert!(split("").is_empty());
        assert!(split("   \n\t ").is_empty());
    }

    #[test]
    fn et_al_is_not_a_boundary() {
        assert_eq!(
            split("Smith et al. (2020) showed X."),
            vec!["Smith et al. (2020) showed X."]
        );
    }

    /// Hand-segmented sentences from typical scientific prose.
    #[test]
    fn hand_segmented_fixture() {
        let cases: &[(&str, &[&str])] = &[
            (
                "Prior work (Li et al., 2020; Wang et al. 2021) relies on abstracts. We instead use the body.",
                &[
                    "Prior work (Li et al., 2020; Wang et al. 2021) relies on abstracts.",
                    "We instead use the body.",
                ],
            ),
            (
                "As shown in Fig. 3, accuracy rises to 93.5 percent. See Sec. 4 for details.",
                &[
                    "As shown in Fig. 3, accuracy rises to 93.5 percent.",
                    "See Sec. 4 for details.",
                ],
            ),
            (
                "We use common baselines, e.g. BM25 and i.e. dense retrievers. Results follow.",
                &[
                    "We use common baselines, e.g. BM25 and i.e. dense retrievers.",
                    "Results follow.",
                ],
            ),
            (
                "J. Smith proposed it. Does it scale? Yes! It scales to 1B tokens.",
                &[
                    "J. Smith proposed it.",
                    "Does it scale?",
                    "Yes!",
                    "It scales to 1B tokens.",
                ],
            ),
            (
                "The loss drops (see Table 2. for the full grid) quickly. \"Strong results.\" Then we stop.",
                &[
                    "The loss drops (see Table 2. for the full grid) quickly.",
                    "\"Strong results.\"",
                    "Then we stop.",
                ],
            ),
            (
                "First paragraph without a period\n\nSecond paragraph starts here.",
                &["First paragraph without a period", "Second paragraph starts here."],
            ),
            (
                "The value is 0.5 in all runs. the lowercase tail stays attached.",
                &["The value is 0.5 in all runs. the lowercase tail stays attached."],
            ),
        ];
        for (input, expected) in cases {
            assert_eq!(&split(input), expected, "input: {input}");
        }
    }

    #[test]
    fn custom_abbreviation() {
        let seg = RuleSegmenter::default().with_abbreviation("Lemma.");
        assert_eq!(seg.split("By Lemma. 2 it holds.").len(), 1);
    }

    proptest! {
        #[test]
        fn conservative(text in "[A-Za-z0-9 .,!?()\\[\\]\"'\n-]{0,200}") {
            let parts = split(&text);
            prop_assert!(parts.iter().all(|p| !p.trim().is_empty()));
            prop_assert_eq!(collapse_whitespace(&parts.join(" ")), collapse_whitespace(&text));
        }
    }
}
