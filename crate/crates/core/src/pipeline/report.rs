//! Per-record predictions and the run report computed from them.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::BleuReporting;
use crate::cascade::{cascade_metrics, CascadeConfig, ConfusionTable, ScoredRecord, TagPrediction};
use crate::corpus::{Corpus, SpoilerTag};
use crate::metrics::{bleu4, corpus_bleu4_with, BleuAggregation, BleuBreakdown};
use crate::spoiler::Method;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RowScores {
    pub multi: Option<f64>,
    pub passage: Option<f64>,
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub predicted_tag: SpoilerTag,
    #[serde(default)]
    pub spoiler_texts: Vec<String>,
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub scores: RowScores,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction for `{0}` has no matching gold record")]
    UnknownId(String),
    #[error("gold record `{0}` has no prediction")]
    MissingPrediction(String),
    #[error("duplicate prediction for `{0}`")]
    DuplicateId(String),
    #[error("gold corpus `{0}` is unlabeled")]
    Unlabeled(String),
    #[error("nothing to evaluate")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task1Report {
    pub multi_threshold: f64,
    pub passage_threshold: f64,
    pub records: usize,
    pub model1_balanced_accuracy: f64,
    pub model2_balanced_accuracy: f64,
    pub cascade_balanced_accuracy: f64,
    pub confusion: ConfusionTable,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateBleu {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<f64>,
}

impl AggregateBleu {
    fn compute(pairs: &[(String, String)], reporting: BleuReporting) -> Self {
        let mut out = AggregateBleu::default();
        for agg in reporting.aggregations() {
            let v = corpus_bleu4_with(pairs, agg).ok();
            match agg {
                BleuAggregation::SentenceMean => out.sentence_mean = v,
                BleuAggregation::Pooled => out.pooled = v,
            }
        }
        out
    }

    fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut v = Vec::new();
        if let Some(x) = self.sentence_mean {
            v.push(("sentence-mean", x));
        }
        if let Some(x) = self.pooled {
            v.push(("pooled", x));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordBleu {
    pub id: String,
    pub gold_tag: SpoilerTag,
    pub predicted_tag: SpoilerTag,
    pub method: Option<Method>,
    pub hypothesis: String,
    pub reference: String,
    pub bleu: BleuBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task2Report {
    pub aggregation: BleuReporting,
    pub overall: AggregateBleu,
    /// Keyed by gold tag.
    pub per_tag: BTreeMap<SpoilerTag, AggregateBleu>,
    pub records: Vec<RecordBleu>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: Option<String>,
    /// File path to SHA-256 of its bytes.
    pub corpus_digests: BTreeMap<String, String>,
    pub timestamp: String,
    pub tool_version: String,
    pub seed: u64,
}

impl Provenance {
    pub fn now(config_digest: Option<String>, corpus_digests: BTreeMap<String, String>, seed: u64) -> Self {
        Provenance {
            config_digest,
            corpus_digests,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task1: Option<Task1Report>,
    pub task2: Option<Task2Report>,
    pub provenance: Provenance,
}

fn match_rows<'a>(
    gold: &'a Corpus,
    rows: &'a [PredictionRow],
) -> Result<Vec<(&'a crate::corpus::Record, &'a PredictionRow)>, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_id: HashMap<&str, &PredictionRow> = HashMap::new();
    for r in rows {
        if by_id.insert(r.id.as_str(), r).is_some() {
            return Err(EvalError::DuplicateId(r.id.clone()));
        }
    }
    let gold_ids: HashMap<&str, ()> = gold.records.iter().map(|r| (r.id.as_str(), ())).collect();
    if let Some(r) = rows.iter().find(|r| !gold_ids.contains_key(r.id.as_str())) {
        return Err(EvalError::UnknownId(r.id.clone()));
    }
    gold.records
        .iter()
        .map(|g| {
            by_id
                .get(g.id.as_str())
                .map(|p| (g, *p))
                .ok_or_else(|| EvalError::MissingPrediction(g.id.clone()))
        })
        .collect()
}

fn task1(
    matched: &[(&crate::corpus::Record, &PredictionRow)],
    cascade: &CascadeConfig,
) -> Option<Task1Report> {
    let scored: Option<Vec<ScoredRecord>> = matched
        .iter()
        .map(|(g, p)| {
            let multi = p.scores.multi?;
            Some(ScoredRecord {
                id: p.id.clone(),
                gold: g.tag?,
                prediction: TagPrediction {
                    tag: p.predicted_tag,
                    multi_score: multi,
                    passage_score: if p.predicted_tag == SpoilerTag::Multi { None } else { p.scores.passage },
                },
                model2_score: p.scores.passage,
            })
        })
        .collect();
    let scored = scored?;
    match cascade_metrics(&scored, cascade) {
        Ok((m1, m2, all, confusion)) => Some(Task1Report {
            multi_threshold: cascade.multi_threshold,
            passage_threshold: cascade.passage_threshold,
            records: scored.len(),
            model1_balanced_accuracy: m1,
            model2_balanced_accuracy: m2,
            cascade_balanced_accuracy: all,
            confusion,
        }),
        Err(e) => {
            tracing::warn!("classification metrics skipped: {e}");
            None
        }
    }
}

fn task2(matched: &[(&crate::corpus::Record, &PredictionRow)], reporting: BleuReporting) -> Option<Task2Report> {
    let mut records = Vec::new();
    for (g, p) in matched {
        let (Some(gold_tag), false, false) = (g.tag, g.spoilers.is_empty(), p.spoiler_texts.is_empty()) else {
            continue;
        };
        let hypothesis = p.spoiler_texts.join(" ");
        let reference = g.spoilers.join(" ");
        records.push(RecordBleu {
            id: p.id.clone(),
            gold_tag,
            predicted_tag: p.predicted_tag,
            method: p.method,
            bleu: bleu4(&hypothesis, &reference),
            hypothesis,
            reference,
        });
    }
    if records.is_empty() {
        return None;
    }
    let pairs = |filter: Option<SpoilerTag>| -> Vec<(String, String)> {
        records
            .iter()
            .filter(|r| filter.is_none_or(|t| r.gold_tag == t))
            .map(|r| (r.hypothesis.clone(), r.reference.clone()))
            .collect()
    };
    let overall = AggregateBleu::compute(&pairs(None), reporting);
    let per_tag = SpoilerTag::ALL
        .into_iter()
        .filter_map(|t| {
            let p = pairs(Some(t));
            (!p.is_empty()).then(|| (t, AggregateBleu::compute(&p, reporting)))
        })
        .collect();
    Some(Task2Report {
        aggregation: reporting,
        overall,
        per_tag,
        records,
    })
}

/// Scores predictions against gold. Classification metrics need scores on
/// every row; BLEU covers rows that carry spoiler text.
pub fn evaluate(
    gold: &Corpus,
    rows: &[PredictionRow],
    cascade: &CascadeConfig,
    reporting: BleuReporting,
) -> Result<(Option<Task1Report>, Option<Task2Report>), EvalError> {
    if !gold.is_labeled() {
        return Err(EvalError::Unlabeled(gold.split.clone()));
    }
    let matched = match_rows(gold, rows)?;
    Ok((task1(&matched, cascade), task2(&matched, reporting)))
}

impl RunReport {
    /// Every aggregate as `(name, value)`, in a fixed order.
    pub fn metric_values(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if let Some(t) = &self.task1 {
            out.push(("task1.model1".into(), t.model1_balanced_accuracy));
            out.push(("task1.model2".into(), t.model2_balanced_accuracy));
            out.push(("task1.cascade".into(), t.cascade_balanced_accuracy));
        }
        if let Some(t) = &self.task2 {
            for (k, v) in t.overall.entries() {
                out.push((format!("task2.overall.{k}"), v));
            }
            for (tag, agg) in &t.per_tag {
                for (k, v) in agg.entries() {
                    out.push((format!("task2.{tag}.{k}"), v));
                }
            }
        }
        out
    }

    /// Largest absolute difference between matching aggregates, or an error
    /// naming the first aggregate present in only one report.
    pub fn max_metric_difference(&self, other: &RunReport) -> Result<f64, String> {
        let a = self.metric_values();
        let b = other.metric_values();
        if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.0 != y.0) {
            let names = |v: &[(String, f64)]| v.iter().map(|x| x.0.clone()).collect::<Vec<_>>().join(", ");
            return Err(format!("reports carry different metrics: [{}] vs [{}]", names(&a), names(&b)));
        }
        Ok(a.iter().zip(&b).map(|(x, y)| (x.1 - y.1).abs()).fold(0.0, f64::max))
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let p = &self.provenance;
        let _ = writeln!(s, "clickspoil {} run at {} (seed {})", p.tool_version, p.timestamp, p.seed);
        if let Some(d) = &p.config_digest {
            let _ = writeln!(s, "config sha256 {d}");
        }
        for (path, d) in &p.corpus_digests {
            let _ = writeln!(s, "corpus {path} sha256 {d}");
        }
        match &self.task1 {
            Some(t) => {
                let _ = writeln!(s, "\nTask 1: spoiler type classification ({} records)", t.records);
                let _ = writeln!(
                    s,
                    "  thresholds: multi {:.3}, passage {:.3}",
                    t.multi_threshold, t.passage_threshold
                );
                let _ = writeln!(s, "  model 1 (multi vs rest)      balanced accuracy {:.4}", t.model1_balanced_accuracy);
                let _ = writeln!(s, "  model 2 (passage vs phrase)  balanced accuracy {:.4}", t.model2_balanced_accuracy);
                let _ = writeln!(s, "  cascade (3 classes)          balanced accuracy {:.4}", t.cascade_balanced_accuracy);
                let _ = writeln!(s, "  confusion (rows gold, columns predicted):");
                for line in t.confusion.render().lines() {
                    let _ = writeln!(s, "    {line}");
                }
            }
            None => {
                let _ = writeln!(s, "\nTask 1: not evaluated");
            }
        }
        match &self.task2 {
            Some(t) => {
                let _ = writeln!(s, "\nTask 2: spoiler generation ({} records)", t.records.len());
                for (k, v) in t.overall.entries() {
                    let _ = writeln!(s, "  BLEU-4 {k:<13} {v:.4}");
                }
                for (tag, agg) in &t.per_tag {
                    for (k, v) in agg.entries() {
                        let _ = writeln!(s, "  BLEU-4 {k:<13} {:<8}{v:.4}", tag.as_str());
                    }
                }
            }
            None => {
                let _ = writeln!(s, "\nTask 2: not evaluated");
            }
        }
        s
    }
}
