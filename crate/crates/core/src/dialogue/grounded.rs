//! Response checks: word-limit flagging and title groundedness.
//!
//! Title-like spans are text inside double quotes (ASCII, curly, or CJK
//! corner/angle brackets), inside square brackets, or following
//! "video titled". Each span is fuzzy-matched against the corpus titles.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::ChannelCorpus;

pub const TITLE_MATCH_THRESHOLD: f64 = 0.85;
/// Spans shorter than this (after normalization) are not treated as titles.
pub const MIN_TITLE_CHARS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResponseCheck {
    Pass,
    LengthFlag { words: usize, limit: usize },
}

impl ResponseCheck {
    pub fn is_flagged(&self) -> bool {
        matches!(self, ResponseCheck::LengthFlag { .. })
    }
}

/// Whitespace-token count against an inclusive limit.
pub fn validate_response(text: &str, limit_words: usize) -> ResponseCheck {
    assert!(limit_words >= 1, "word limit must be at least 1");
    let words = text.split_whitespace().count();
    if words > limit_words {
        ResponseCheck::LengthFlag {
            words,
            limit: limit_words,
        }
    } else {
        ResponseCheck::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Grounded,
    HallucinationSuspect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundednessVerdict {
    pub response_id: String,
    pub mentioned_titles: Vec<String>,
    pub unmatched: Vec<String>,
    pub verdict: Verdict,
    /// Title references were found and matched, but whether the claims about
    /// those videos are accurate still needs a human look.
    pub manual_review: bool,
}

fn patterns() -> &'static [Regex] {
    static P: OnceLock<Vec<Regex>> = OnceLock::new();
    P.get_or_init(|| {
        [
            r#""([^"\n]+)""#,
            r"“([^”\n]+)”",
            r"「([^」\n]+)」",
            r"『([^』\n]+)』",
            r"《([^》\n]+)》",
            r"\[([^\]\n]+)\]",
            r#"(?i)\bvideos?\s+titled\s+([^"“「『《\[\s][^.,;!?\n]*)"#,
        ]
        .iter()
        .map(|p| Regex::new(p).expect("static pattern"))
        .collect()
    })
}

/// Lowercase, punctuation-trimmed, whitespace-collapsed form used for matching.
pub fn normalize_title(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

/// Title-like spans in order of first appearance, deduplicated.
pub fn extract_title_spans(text: &str) -> Vec<String> {
    let mut found: Vec<(usize, String)> = Vec::new();
    for p in patterns() {
        for cap in p.captures_iter(text) {
            let m = cap.get(1).expect("pattern has a group");
            let span = m.as_str().trim().to_string();
            if normalize_title(&span).chars().count() >= MIN_TITLE_CHARS {
                found.push((m.start(), span));
            }
        }
    }
    found.sort_by_key(|(pos, _)| *pos);
    let mut seen = std::collections::HashSet::new();
    found
        .into_iter()
        .filter(|(_, s)| seen.insert(normalize_title(s)))
        .map(|(_, s)| s)
        .collect()
}

pub fn title_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&normalize_title(a), &normalize_title(b))
}

#[derive(Debug, Clone)]
pub struct TitleMatcher {
    titles: Vec<String>,
}

impl TitleMatcher {
    pub fn new<S: AsRef<str>>(titles: &[S]) -> Self {
        TitleMatcher {
            titles: titles.iter().map(|t| normalize_title(t.as_ref())).collect(),
        }
    }

    pub fn from_corpus(corpus: &ChannelCorpus) -> Self {
        let titles: Vec<&str> = corpus.videos.iter().map(|v| v.title.as_str()).collect();
        Self::new(&titles)
    }

    /// Best-matching known title index, if any clears the threshold.
    pub fn best_match(&self, span: &str) -> Option<usize> {
        let n = normalize_title(span);
        self.titles
            .iter()
            .enumerate()
            .map(|(i, t)| (i, strsim::normalized_levenshtein(&n, t)))
            .filter(|(_, s)| *s >= TITLE_MATCH_THRESHOLD)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
    }

    pub fn is_known(&self, span: &str) -> bool {
        self.best_match(span).is_some()
    }

    pub fn check(&self, response_id: &str, text: &str) -> GroundednessVerdict {
        let mentioned = extract_title_spans(text);
        let unmatched: Vec<String> = mentioned.iter().filter(|s| !self.is_known(s)).cloned().collect();
        let verdict = if unmatched.is_empty() {
            Verdict::Grounded
        } else {
            Verdict::HallucinationSuspect
        };
        GroundednessVerdict {
            response_id: response_id.to_string(),
            manual_review: !mentioned.is_empty() && unmatched.is_empty(),
            mentioned_titles: mentioned,
            unmatched,
            verdict,
        }
    }
}

pub fn check_groundedness(response_id: &str, response: &str, corpus: &ChannelCorpus) -> GroundednessVerdict {
    TitleMatcher::from_corpus(corpus).check(response_id, response)
}

/// Fraction of verdicts that are hallucination suspects.
pub fn hallucination_rate(verdicts: &[GroundednessVerdict]) -> f64 {
    let flags: Vec<bool> = verdicts.iter().map(|v| v.verdict == Verdict::HallucinationSuspect).collect();
    crate::metrics::suspect_rate(&flags)
}
