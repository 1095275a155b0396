use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{tokenize, MetricsError, TokenSequence};

/// Highest n-gram order used by BLEU-4.
pub const MAX_ORDER: usize = 4;

/// Multiset of the n-grams of one order in a token sequence.
#[derive(Debug, Clone)]
pub struct NGramCounts<'a> {
    order: usize,
    counts: HashMap<&'a [String], usize>,
}

impl<'a> NGramCounts<'a> {
    pub fn new(tokens: &'a [String], order: usize) -> Self {
        assert!(order >= 1, "n-gram order must be at least 1");
        let mut counts = HashMap::new();
        if tokens.len() >= order {
            for gram in tokens.windows(order) {
                *counts.entry(gram).or_insert(0) += 1;
            }
        }
        NGramCounts { order, counts }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [String], usize)> + '_ {
        self.counts.iter().map(|(g, c)| (*g, *c))
    }
}

/// Clipped n-gram matches and the hypothesis n-gram total, as a
/// numerator/denominator pair.
pub fn modified_precision(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let hyp_counts = NGramCounts::new(hyp, n);
    let ref_counts = NGramCounts::new(reference, n);
    let clipped = hyp_counts.iter().map(|(g, c)| c.min(ref_counts.get(g))).sum();
    (clipped, hyp_counts.total())
}

/// `exp(-max(r/c - 1, 0))`, with BP = 1 for an empty reference and BP = 0
/// for an empty hypothesis against a non-empty reference.
pub fn brevity_penalty(c: usize, r: usize) -> f64 {
    if r == 0 || c >= r {
        return 1.0;
    }
    if c == 0 {
        return 0.0;
    }
    (-(r as f64 / c as f64 - 1.0)).exp()
}

/// Sentence-level BLEU-4 result.
///
/// `precisions[n-1]` is `None` when the hypothesis has no n-grams of order
/// `n`; such orders are left out of the geometric mean and the remaining
/// weights renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuBreakdown {
    pub precisions: [Option<f64>; MAX_ORDER],
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    pub score: f64,
}

fn combine(matches: [usize; MAX_ORDER], totals: [usize; MAX_ORDER], c: usize, r: usize) -> BleuBreakdown {
    let mut precisions = [None; MAX_ORDER];
    for n in 0..MAX_ORDER {
        if totals[n] > 0 {
            precisions[n] = Some(matches[n] as f64 / totals[n] as f64);
        }
    }
    let bp = brevity_penalty(c, r);
    let defined: Vec<f64> = precisions.iter().flatten().copied().collect();
    let score = if defined.is_empty() || defined.contains(&0.0) {
        0.0
    } else {
        let weight = 1.0 / defined.len() as f64;
        let log_mean: f64 = defined.iter().map(|p| weight * p.ln()).sum();
        // exp(ln 1) can drift a hair above 1.0
        (bp * log_mean.exp()).min(1.0)
    };
    BleuBreakdown {
        precisions,
        matches,
        totals,
        brevity_penalty: bp,
        hyp_len: c,
        ref_len: r,
        score,
    }
}

/// BLEU-4 over pre-tokenized sequences with uniform weights and no smoothing.
pub fn bleu4_tokens(hyp: &[String], reference: &[String]) -> BleuBreakdown {
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    for n in 1..=MAX_ORDER {
        let (m, t) = modified_precision(hyp, reference, n);
        matches[n - 1] = m;
        totals[n - 1] = t;
    }
    combine(matches, totals, hyp.len(), reference.len())
}

pub fn bleu4(hypothesis: &str, reference: &str) -> BleuBreakdown {
    let hyp: TokenSequence = tokenize(hypothesis);
    let reference = tokenize(reference);
    bleu4_tokens(&hyp, &reference)
}

/// How per-pair BLEU results are aggregated over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BleuAggregation {
    /// Arithmetic mean of sentence-level scores.
    #[default]
    SentenceMean,
    /// Matches, totals and lengths summed over all pairs before combining.
    Pooled,
}

impl FromStr for BleuAggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentence-mean" => Ok(BleuAggregation::SentenceMean),
            "pooled" => Ok(BleuAggregation::Pooled),
            other => Err(format!("unknown BLEU aggregation `{other}` (expected sentence-mean or pooled)")),
        }
    }
}

impl fmt::Display for BleuAggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BleuAggregation::SentenceMean => "sentence-mean",
            BleuAggregation::Pooled => "pooled",
        })
    }
}

/// Mean sentence-level BLEU-4 over (hypothesis, reference) pairs.
pub fn corpus_bleu4<H: AsRef<str>, R: AsRef<str>>(pairs: &[(H, R)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum: f64 = pairs.iter().map(|(h, r)| bleu4(h.as_ref(), r.as_ref()).score).sum();
    Ok(sum / pairs.len() as f64)
}

/// Corpus BLEU-4 from pooled clipped counts and pooled lengths.
pub fn corpus_bleu4_pooled<H: AsRef<str>, R: AsRef<str>>(pairs: &[(H, R)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    let (mut c, mut r) = (0, 0);
    for (h, rf) in pairs {
        let b = bleu4(h.as_ref(), rf.as_ref());
        for n in 0..MAX_ORDER {
            matches[n] += b.matches[n];
            totals[n] += b.totals[n];
        }
        c += b.hyp_len;
        r += b.ref_len;
    }
    Ok(combine(matches, totals, c, r).score)
}

pub fn corpus_bleu4_with<H: AsRef<str>, R: AsRef<str>>(
    pairs: &[(H, R)],
    aggregation: BleuAggregation,
) -> Result<f64, MetricsError> {
    match aggregation {
        BleuAggregation::SentenceMean => corpus_bleu4(pairs),
        BleuAggregation::Pooled => corpus_bleu4_pooled(pairs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn clipped_unigrams() {
        assert_eq!(modified_precision(&v(&["a", "a", "b"]), &v(&["a", "b"]), 1), (2, 3));
        let four = v(&["w", "x", "y", "z"]);
        assert_eq!(modified_precision(&four, &four, 4), (1, 1));
        assert_eq!(modified_precision(&v(&["a", "b"]), &four, 3), (0, 0));
    }

    #[test]
    fn ngram_total_matches_window_count() {
        let t = v(&["a", "b", "a", "b", "a"]);
        for n in 1..=6 {
            assert_eq!(NGramCounts::new(&t, n).total(), (t.len() + 1).saturating_sub(n));
        }
    }

    #[test]
    fn brevity_penalty_values() {
        assert_eq!(brevity_penalty(10, 10), 1.0);
        assert_eq!(brevity_penalty(20, 10), 1.0);
        assert!((brevity_penalty(5, 10) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((brevity_penalty(5, 10) - 0.367879).abs() < 1e-6);
        assert_eq!(brevity_penalty(0, 0), 1.0);
        assert_eq!(brevity_penalty(3, 0), 1.0);
        assert_eq!(brevity_penalty(0, 4), 0.0);
    }

    #[test]
    fn identity_and_disjoint() {
        let s = "had a UK tax bill of 35 million pounds";
        assert_eq!(bleu4(s, s).score, 1.0);
        assert_eq!(bleu4("Cyprus", "Cyprus").score, 1.0);
        assert_eq!(bleu4("alpha beta gamma delta", "one two three four").score, 0.0);
        assert_eq!(bleu4("", "anything").score, 0.0);
        assert_eq!(bleu4("", "").score, 0.0);
    }

    #[test]
    fn hand_computed_sentence() {
        // hyp: the cat sat on the mat (6), ref: the cat sat on a mat here (7)
        // p1 = 5/6 (second "the" clipped), p2 = 3/5, p3 = 2/4, p4 = 1/3
        let b = bleu4("the cat sat on the mat", "the cat sat on a mat here");
        assert_eq!(b.matches, [5, 3, 2, 1]);
        assert_eq!(b.totals, [6, 5, 4, 3]);
        let expected = (-(7.0f64 / 6.0 - 1.0)).exp() * (5.0f64 / 6.0 * 3.0 / 5.0 * 2.0 / 4.0 * 1.0 / 3.0).powf(0.25);
        assert!((b.score - expected).abs() < 1e-12);
    }

    #[test]
    fn corpus_means() {
        assert_eq!(corpus_bleu4(&[("a b c d", "a b c d")]).unwrap(), 1.0);
        assert_eq!(corpus_bleu4(&[("a b c d", "a b c d"), ("x", "y")]).unwrap(), 0.5);
        assert_eq!(corpus_bleu4::<&str, &str>(&[]), Err(MetricsError::Empty));
        assert_eq!(corpus_bleu4_pooled(&[("a b c d", "a b c d")]).unwrap(), 1.0);
    }

    #[test]
    fn pooled_differs_from_mean() {
        let pairs = [("a b c d e", "a b c d e"), ("x y", "z w")];
        let mean = corpus_bleu4(&pairs).unwrap();
        let pooled = corpus_bleu4_pooled(&pairs).unwrap();
        assert_eq!(mean, 0.5);
        assert!(pooled > 0.0 && pooled < 1.0);
    }
}
