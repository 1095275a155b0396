//! Evaluation metrics: BLEU-4 for spoilers and balanced accuracy for
//! spoiler-type classification, plus the tokenizer they share.

mod accuracy;
mod bleu;

pub use accuracy::{balanced_accuracy, per_class_recall};
pub use bleu::{
    bleu4, bleu4_tokens, brevity_penalty, corpus_bleu4, corpus_bleu4_pooled, corpus_bleu4_with, modified_precision,
    BleuAggregation, BleuBreakdown, NGramCounts, MAX_ORDER,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no pairs to score")]
    Empty,
}

/// A lowercased token sequence as produced by [`tokenize`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl std::ops::Deref for TokenSequence {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

/// A token together with the byte range it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetToken {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits `text` into maximal alphanumeric runs and single punctuation
/// characters, lowercasing everything. Whitespace is dropped.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence(tokenize_with_offsets(text).into_iter().map(|t| t.text).collect())
}

/// Same rule as [`tokenize`], keeping byte offsets into `text`.
pub fn tokenize_with_offsets(text: &str) -> Vec<OffsetToken> {
    let mut out = Vec::new();
    let mut run: Option<(usize, String)> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            let (_, buf) = run.get_or_insert_with(|| (i, String::new()));
            buf.extend(ch.to_lowercase());
            continue;
        }
        if let Some((start, buf)) = run.take() {
            out.push(OffsetToken { text: buf, start, end: i });
        }
        if !ch.is_whitespace() {
            out.push(OffsetToken {
                text: ch.to_lowercase().collect(),
                start: i,
                end: i + ch.len_utf8(),
            });
        }
    }
    if let Some((start, buf)) = run {
        out.push(OffsetToken {
            text: buf,
            start,
            end: text.len(),
        });
    }
    out
}
