//! Extractive spoiling: pick verbatim article spans that best cover the
//! title's rarer tokens.

use std::collections::{HashMap, HashSet};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Method, SpoilerPrediction};
use crate::corpus::{full_text, Record, SpoilerTag};
use crate::metrics::{tokenize, tokenize_with_offsets, OffsetToken};

/// Longest phrase spoiler, in tokens.
pub const PHRASE_MAX_TOKENS: usize = 5;

/// Scores closer than this are ties.
const SCORE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub passage_max_tokens: usize,
    pub multi_max_span_tokens: usize,
    pub multi_min_spans: usize,
    pub multi_max_spans: usize,
    /// A further multi span is kept only if its score reaches this fraction
    /// of the first span's score.
    pub multi_gain_ratio: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            passage_max_tokens: 40,
            multi_max_span_tokens: 40,
            multi_min_spans: 2,
            multi_max_spans: 5,
            multi_gain_ratio: 0.25,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("record `{0}` has an empty article")]
    EmptyArticle(String),
    #[error("record `{id}` has {tokens} article tokens, too few for a {tag} spoiler")]
    ArticleTooShort { id: String, tokens: usize, tag: SpoilerTag },
}

/// A scored article span `[start_token, end_token)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanCandidate {
    pub start_token: usize,
    pub end_token: usize,
    pub text: String,
    pub score: f64,
}

impl SpanCandidate {
    pub fn len(&self) -> usize {
        self.end_token - self.start_token
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn overlaps(&self, start: usize, end: usize) -> bool {
        start < self.end_token && self.start_token < end
    }
}

fn counts_for_title(token: &str) -> bool {
    token.chars().count() > 2
}

/// Sum of `1 / article_frequency` over distinct candidate tokens that also
/// occur in the title. Tokens of two characters or fewer are ignored.
pub fn score_span(candidate: &[String], title: &[String], article_frequencies: &HashMap<String, usize>) -> f64 {
    let title: HashSet<&str> = title.iter().map(String::as_str).filter(|t| counts_for_title(t)).collect();
    let mut seen = HashSet::new();
    let mut score = 0.0;
    for t in candidate {
        if title.contains(t.as_str()) && seen.insert(t.as_str()) {
            score += 1.0 / article_frequencies.get(t).copied().unwrap_or(1).max(1) as f64;
        }
    }
    score
}

/// Tokenized article plus the per-token weights used for span scoring.
#[derive(Debug, Clone)]
pub struct ArticleIndex {
    pub text: String,
    pub tokens: Vec<OffsetToken>,
    pub frequencies: HashMap<String, usize>,
    /// Per token: `1 / frequency` if it is a scoring title token, else 0.
    weights: Vec<f64>,
}

impl ArticleIndex {
    pub fn new(record: &Record) -> Self {
        let text = full_text(record);
        let tokens = tokenize_with_offsets(&text);
        let mut frequencies: HashMap<String, usize> = HashMap::new();
        for t in &tokens {
            *frequencies.entry(t.text.clone()).or_default() += 1;
        }
        let title: HashSet<String> = tokenize(&record.title)
            .into_inner()
            .into_iter()
            .filter(|t| counts_for_title(t))
            .collect();
        let weights = tokens
            .iter()
            .map(|t| {
                if title.contains(&t.text) {
                    1.0 / frequencies[&t.text] as f64
                } else {
                    0.0
                }
            })
            .collect();
        ArticleIndex {
            text,
            tokens,
            frequencies,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Verbatim article text covering tokens `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> &str {
        &self.text[self.tokens[start].start..self.tokens[end - 1].end]
    }

    fn candidate(&self, start: usize, end: usize, score: f64) -> SpanCandidate {
        SpanCandidate {
            start_token: start,
            end_token: end,
            text: self.slice(start, end).to_string(),
            score,
        }
    }

    /// Highest-scoring span whose length lies in `lengths` and that overlaps
    /// none of `taken`. Ties go to the shorter span, then the earlier start.
    pub fn best_span(&self, lengths: RangeInclusive<usize>, taken: &[SpanCandidate]) -> Option<SpanCandidate> {
        let (min_len, max_len) = (*lengths.start().max(&1), *lengths.end());
        let n = self.tokens.len();
        let mut best: Option<(f64, usize, usize)> = None;
        let mut seen: HashSet<&str> = HashSet::new();
        for start in 0..n {
            if taken.iter().any(|s| s.overlaps(start, start + 1)) {
                continue;
            }
            seen.clear();
            let mut score = 0.0;
            for end in start + 1..=(start + max_len).min(n) {
                let tok = end - 1;
                if taken.iter().any(|s| s.overlaps(tok, end)) {
                    break;
                }
                let w = self.weights[tok];
                if w > 0.0 && seen.insert(self.tokens[tok].text.as_str()) {
                    score += w;
                }
                if end - start < min_len {
                    continue;
                }
                let better = best.is_none_or(|(b, bs, be)| {
                    score > b + SCORE_EPS || (score >= b - SCORE_EPS && end - start < be - bs)
                });
                if better {
                    best = Some((score, start, end));
                }
            }
        }
        best.map(|(score, s, e)| self.candidate(s, e, score))
    }
}

/// Verbatim spans for `tag`; see [`extract_spoiler_with`].
pub fn extract_spans(record: &Record, tag: SpoilerTag, opts: &ExtractOptions) -> Result<Vec<SpanCandidate>, ExtractError> {
    let index = ArticleIndex::new(record);
    if index.is_empty() {
        return Err(ExtractError::EmptyArticle(record.id.clone()));
    }
    let too_short = || ExtractError::ArticleTooShort {
        id: record.id.clone(),
        tokens: index.len(),
        tag,
    };
    match tag {
        SpoilerTag::Phrase => Ok(vec![index.best_span(1..=PHRASE_MAX_TOKENS, &[]).ok_or_else(too_short)?]),
        SpoilerTag::Passage => {
            let max = opts.passage_max_tokens.max(PHRASE_MAX_TOKENS + 1);
            Ok(vec![index.best_span(PHRASE_MAX_TOKENS + 1..=max, &[]).ok_or_else(too_short)?])
        }
        SpoilerTag::Multi => {
            // Leave at least one free token so a second span always fits.
            let lengths = 1..=opts.multi_max_span_tokens.min(index.len().saturating_sub(1)).max(1);
            let first = index.best_span(lengths.clone(), &[]).ok_or_else(too_short)?;
            let floor = opts.multi_gain_ratio * first.score;
            let mut chosen = vec![first];
            while chosen.len() < opts.multi_max_spans.max(opts.multi_min_spans) {
                let Some(next) = index.best_span(lengths.clone(), &chosen) else { break };
                if chosen.len() >= opts.multi_min_spans && (next.score < floor || next.score <= 0.0) {
                    break;
                }
                chosen.push(next);
            }
            if chosen.len() < opts.multi_min_spans {
                return Err(too_short());
            }
            chosen.sort_by_key(|s| s.start_token);
            Ok(chosen)
        }
    }
}

pub fn extract_spoiler_with(
    record: &Record,
    tag: SpoilerTag,
    opts: &ExtractOptions,
) -> Result<SpoilerPrediction, ExtractError> {
    let spans = extract_spans(record, tag, opts)?;
    Ok(SpoilerPrediction {
        tag,
        method: Method::Extractive,
        texts: spans.into_iter().map(|s| s.text).collect(),
        warnings: Vec::new(),
    })
}

/// Extractive spoiler with default options: a 1–5 token span for `phrase`,
/// a 6–40 token span for `passage`, and 2–5 disjoint spans for `multi`.
pub fn extract_spoiler(record: &Record, tag: SpoilerTag) -> Result<SpoilerPrediction, ExtractError> {
    extract_spoiler_with(record, tag, &ExtractOptions::default())
}
