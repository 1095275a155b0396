//! Brute-force reference implementations and fixture helpers shared by the
//! integration tests and the acceptance run. Nothing here calls the metric,
//! cascade or extraction code it is used to check.

#![allow(dead_code)]

use std::path::PathBuf;

use clickspoil::corpus::{full_text, load_corpus, Corpus, Record};
use clickspoil::metrics::tokenize;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture_path(rel: &str) -> PathBuf {
    manifest_dir().join("tests/fixtures").join(rel)
}

/// The three worked exemplars, one per spoiler type.
pub fn exemplar_fixture_path() -> PathBuf {
    manifest_dir().join("data/appendix_exemplars.jsonl")
}

pub fn exemplar_fixture() -> Corpus {
    load_corpus(exemplar_fixture_path(), "fixture", true).unwrap()
}

pub fn prompt_target() -> Record {
    load_corpus(fixture_path("target.jsonl"), "target", true).unwrap().records.remove(0)
}

fn count_in(seq: &[Vec<String>], gram: &[String]) -> usize {
    seq.iter().filter(|g| g.as_slice() == gram).count()
}

fn grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

/// Sentence BLEU-4 computed directly from its definition: clipped n-gram
/// counts by linear scan, brevity penalty `exp(1 - r/c)` for short outputs,
/// geometric mean over the orders the hypothesis is long enough to have.
pub fn oracle_bleu(hyp: &[String], reference: &[String]) -> f64 {
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let mut logs = Vec::new();
    for n in 1..=4 {
        let h = grams(hyp, n);
        if h.is_empty() {
            continue;
        }
        let rf = grams(reference, n);
        let mut distinct: Vec<Vec<String>> = h.clone();
        distinct.sort();
        distinct.dedup();
        let clipped: usize = distinct.iter().map(|g| count_in(&h, g).min(count_in(&rf, g))).sum();
        if clipped == 0 {
            return 0.0;
        }
        logs.push((clipped as f64 / h.len() as f64).ln());
    }
    if logs.is_empty() {
        return 0.0;
    }
    let bp = if r == 0.0 || c >= r {
        1.0
    } else {
        (1.0 - r / c).exp()
    };
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    (bp * mean.exp()).min(1.0)
}

pub fn oracle_bleu_str(hyp: &str, reference: &str) -> f64 {
    oracle_bleu(&tokenize(hyp), &tokenize(reference))
}

/// Mean over gold classes of the fraction of that class predicted correctly.
pub fn oracle_macro_recall<L: PartialEq + Clone>(pairs: &[(L, L)]) -> f64 {
    let mut classes: Vec<L> = Vec::new();
    for (g, _) in pairs {
        if !classes.contains(g) {
            classes.push(g.clone());
        }
    }
    let recalls: Vec<f64> = classes
        .iter()
        .map(|c| {
            let of_class: Vec<&(L, L)> = pairs.iter().filter(|(g, _)| g == c).collect();
            of_class.iter().filter(|(g, p)| g == p).count() as f64 / of_class.len() as f64
        })
        .collect();
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpan {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// Rarity-weighted title overlap of article tokens `[start, end)`.
pub fn oracle_span_score(article: &[String], title: &[String], start: usize, end: usize) -> f64 {
    span_score_counted(article, title, start, end, &|t: &String| article.iter().filter(|a| *a == t).count())
}

fn span_score_counted(
    article: &[String],
    title: &[String],
    start: usize,
    end: usize,
    occurrences: &dyn Fn(&String) -> usize,
) -> f64 {
    let mut seen: Vec<&String> = Vec::new();
    let mut score = 0.0;
    for t in &article[start..end] {
        if t.chars().count() <= 2 || seen.contains(&t) || !title.contains(t) {
            continue;
        }
        seen.push(t);
        score += 1.0 / occurrences(t) as f64;
    }
    score
}

/// Every span with length in `min_len..=max_len`, best first: higher score,
/// then shorter, then earlier.
pub fn oracle_ranked_spans(record: &Record, min_len: usize, max_len: usize) -> Vec<OracleSpan> {
    let article = tokenize(&full_text(record)).into_inner();
    let title = tokenize(&record.title).into_inner();
    let mut counts: std::collections::BTreeMap<&String, usize> = std::collections::BTreeMap::new();
    for t in &article {
        *counts.entry(t).or_default() += 1;
    }
    let occurrences = |t: &String| counts[t];
    let mut all = Vec::new();
    for start in 0..article.len() {
        for len in min_len.max(1)..=max_len {
            let end = start + len;
            if end > article.len() {
                break;
            }
            all.push(OracleSpan {
                start,
                end,
                score: span_score_counted(&article, &title, start, end, &occurrences),
            });
        }
    }
    all.sort_by(|a, b| {
        let by_score = if (a.score - b.score).abs() <= 1e-9 {
            std::cmp::Ordering::Equal
        } else {
            b.score.partial_cmp(&a.score).unwrap()
        };
        by_score
            .then((a.end - a.start).cmp(&(b.end - b.start)))
            .then(a.start.cmp(&b.start))
    });
    all
}

pub fn oracle_best_span(record: &Record, min_len: usize, max_len: usize) -> Option<OracleSpan> {
    oracle_ranked_spans(record, min_len, max_len).into_iter().next()
}

/// `true` when the best span is strictly better than every other candidate
/// under the ranking above (i.e. the winner does not depend on tie order
/// among equals).
pub fn oracle_best_is_unique(record: &Record, min_len: usize, max_len: usize) -> bool {
    let ranked = oracle_ranked_spans(record, min_len, max_len);
    match ranked.as_slice() {
        [] => false,
        [_] => true,
        [a, b, ..] => a.score > b.score + 1e-9 || (b.end - b.start) > (a.end - a.start),
    }
}

/// Small deterministic generator so oracle tests do not depend on the
/// library's randomness.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    pub fn tokens(&mut self, max_len: u64, vocab: u64) -> Vec<String> {
        let len = self.below(max_len + 1);
        (0..len).map(|_| format!("w{}", self.below(vocab))).collect()
    }
}
