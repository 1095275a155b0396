//! Spoiler-type prediction with two binary classifiers applied in sequence:
//! Model 1 separates `multi` from the rest, Model 2 separates `passage` from
//! `phrase` for whatever Model 1 rejects.

mod baseline;
mod sweep;

pub use baseline::{hashed_features, train_baseline, BaselineScorer, BinaryTask, HyperParams, TrainError};
pub use sweep::{
    run_sweep, sample_configs, split_holdout, ParamCorrelation, SearchSpace, SweepError, SweepOptions, SweepReport,
    TrialFailure, TrialResult,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, SpoilerTag};
use crate::metrics::balanced_accuracy;

/// Which of the two cascade stages a scorer plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelRole {
    /// Model 1: probability that the spoiler is `multi`.
    Multi,
    /// Model 2: probability that the spoiler is `passage` rather than `phrase`.
    Passage,
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelRole::Multi => "model1 (multi vs rest)",
            ModelRole::Passage => "model2 (passage vs phrase)",
        })
    }
}

#[derive(Debug, Error)]
#[error("scorer failed: {0}")]
pub struct ScorerError(pub String);

/// A binary classifier over a clickbait title.
pub trait BinaryScorer: Send + Sync {
    /// Probability of the positive class, in `[0, 1]`.
    fn score(&self, text: &str) -> Result<f64, ScorerError>;
}

impl<S: BinaryScorer + ?Sized> BinaryScorer for &S {
    fn score(&self, text: &str) -> Result<f64, ScorerError> {
        (**self).score(text)
    }
}

impl<S: BinaryScorer + ?Sized> BinaryScorer for Box<S> {
    fn score(&self, text: &str) -> Result<f64, ScorerError> {
        (**self).score(text)
    }
}

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("{role} failed: {source}")]
    Scorer {
        role: ModelRole,
        #[source]
        source: ScorerError,
    },
    #[error("{role} returned {score}, outside [0, 1]")]
    ScoreOutOfRange { role: ModelRole, score: f64 },
    #[error("title is empty")]
    EmptyTitle,
    #[error("threshold {0} must lie strictly inside (0, 1)")]
    BadThreshold(f64),
    #[error("record {0} has no gold tag")]
    Unlabeled(String),
    #[error("cannot compute {metric}: gold labels contain no `{missing}` records")]
    MissingClass { metric: &'static str, missing: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub multi_threshold: f64,
    pub passage_threshold: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            multi_threshold: 0.5,
            passage_threshold: 0.5,
        }
    }
}

impl CascadeConfig {
    pub fn new(multi_threshold: f64, passage_threshold: f64) -> Result<Self, CascadeError> {
        let cfg = CascadeConfig {
            multi_threshold,
            passage_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CascadeError> {
        for t in [self.multi_threshold, self.passage_threshold] {
            if !(t > 0.0 && t < 1.0) {
                return Err(CascadeError::BadThreshold(t));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagPrediction {
    pub tag: SpoilerTag,
    pub multi_score: f64,
    /// Only set when Model 1 rejected `multi`.
    pub passage_score: Option<f64>,
}

fn checked_score<S: BinaryScorer + ?Sized>(scorer: &S, role: ModelRole, text: &str) -> Result<f64, CascadeError> {
    let score = scorer
        .score(text)
        .map_err(|source| CascadeError::Scorer { role, source })?;
    if !(0.0..=1.0).contains(&score) {
        return Err(CascadeError::ScoreOutOfRange { role, score });
    }
    Ok(score)
}

/// Runs Model 1, and Model 2 only if Model 1 rejects `multi`.
pub fn predict_tag<M1, M2>(
    title: &str,
    model1: &M1,
    model2: &M2,
    config: &CascadeConfig,
) -> Result<TagPrediction, CascadeError>
where
    M1: BinaryScorer + ?Sized,
    M2: BinaryScorer + ?Sized,
{
    if title.trim().is_empty() {
        return Err(CascadeError::EmptyTitle);
    }
    let multi_score = checked_score(model1, ModelRole::Multi, title)?;
    if multi_score >= config.multi_threshold {
        return Ok(TagPrediction {
            tag: SpoilerTag::Multi,
            multi_score,
            passage_score: None,
        });
    }
    let passage_score = checked_score(model2, ModelRole::Passage, title)?;
    let tag = if passage_score >= config.passage_threshold {
        SpoilerTag::Passage
    } else {
        SpoilerTag::Phrase
    };
    Ok(TagPrediction {
        tag,
        multi_score,
        passage_score: Some(passage_score),
    })
}

/// 3×3 counts indexed `[gold][predicted]` in [`SpoilerTag::ALL`] order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub counts: [[usize; 3]; 3],
}

fn tag_index(tag: SpoilerTag) -> usize {
    SpoilerTag::ALL.iter().position(|&t| t == tag).unwrap()
}

impl ConfusionTable {
    pub fn from_pairs(pairs: &[(SpoilerTag, SpoilerTag)]) -> Self {
        let mut t = ConfusionTable::default();
        for &(gold, pred) in pairs {
            t.counts[tag_index(gold)][tag_index(pred)] += 1;
        }
        t
    }

    pub fn get(&self, gold: SpoilerTag, predicted: SpoilerTag) -> usize {
        self.counts[tag_index(gold)][tag_index(predicted)]
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:>14}", "gold \\ pred");
        for t in SpoilerTag::ALL {
            out.push_str(&format!("{:>9}", t.as_str()));
        }
        out.push('\n');
        for g in SpoilerTag::ALL {
            out.push_str(&format!("{:>14}", g.as_str()));
            for p in SpoilerTag::ALL {
                out.push_str(&format!("{:>9}", self.get(g, p)));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-record output of a cascade evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: String,
    pub gold: SpoilerTag,
    pub prediction: TagPrediction,
    /// Model 2's score on gold non-multi records, whether or not the cascade
    /// needed it.
    pub model2_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub model1_balanced_accuracy: f64,
    pub model2_balanced_accuracy: f64,
    pub cascade_balanced_accuracy: f64,
    pub confusion: ConfusionTable,
    pub records: Vec<ScoredRecord>,
}

impl CascadeReport {
    pub fn pairs(&self) -> Vec<(SpoilerTag, SpoilerTag)> {
        self.records.iter().map(|r| (r.gold, r.prediction.tag)).collect()
    }
}

/// Three balanced accuracies from per-record scores: Model 1 on every record,
/// Model 2 on gold non-multi records, and the full 3-class cascade.
pub fn cascade_metrics(
    records: &[ScoredRecord],
    config: &CascadeConfig,
) -> Result<(f64, f64, f64, ConfusionTable), CascadeError> {
    let m1_pairs: Vec<(bool, bool)> = records
        .iter()
        .map(|r| (r.gold == SpoilerTag::Multi, r.prediction.multi_score >= config.multi_threshold))
        .collect();
    require_both(&m1_pairs, "model1 balanced accuracy", "multi", "non-multi")?;

    let m2_pairs: Vec<(bool, bool)> = records
        .iter()
        .filter(|r| r.gold != SpoilerTag::Multi)
        .map(|r| {
            let s = r.model2_score.or(r.prediction.passage_score).unwrap_or(0.0);
            (r.gold == SpoilerTag::Passage, s >= config.passage_threshold)
        })
        .collect();
    require_both(&m2_pairs, "model2 balanced accuracy", "passage", "phrase")?;

    let pairs: Vec<(SpoilerTag, SpoilerTag)> = records.iter().map(|r| (r.gold, r.prediction.tag)).collect();
    let mut counts: BTreeMap<SpoilerTag, usize> = BTreeMap::new();
    for (g, _) in &pairs {
        *counts.entry(*g).or_default() += 1;
    }
    for t in SpoilerTag::ALL {
        if !counts.contains_key(&t) {
            return Err(CascadeError::MissingClass {
                metric: "3-class balanced accuracy",
                missing: t.to_string(),
            });
        }
    }

    // inputs are non-empty after the class checks above
    let m1 = balanced_accuracy(&m1_pairs).unwrap();
    let m2 = balanced_accuracy(&m2_pairs).unwrap();
    let all = balanced_accuracy(&pairs).unwrap();
    Ok((m1, m2, all, ConfusionTable::from_pairs(&pairs)))
}

fn require_both(pairs: &[(bool, bool)], metric: &'static str, pos: &str, neg: &str) -> Result<(), CascadeError> {
    if !pairs.iter().any(|p| p.0) {
        return Err(CascadeError::MissingClass {
            metric,
            missing: pos.into(),
        });
    }
    if !pairs.iter().any(|p| !p.0) {
        return Err(CascadeError::MissingClass {
            metric,
            missing: neg.into(),
        });
    }
    Ok(())
}

/// Scores one labeled record: the cascade prediction plus Model 2's own
/// decision for gold non-multi records.
pub fn score_record<M1, M2>(
    record: &crate::corpus::Record,
    model1: &M1,
    model2: &M2,
    config: &CascadeConfig,
) -> Result<ScoredRecord, CascadeError>
where
    M1: BinaryScorer + ?Sized,
    M2: BinaryScorer + ?Sized,
{
    let gold = record.tag.ok_or_else(|| CascadeError::Unlabeled(record.id.clone()))?;
    let prediction = predict_tag(&record.title, model1, model2, config)?;
    let model2_score = match (gold, prediction.passage_score) {
        (SpoilerTag::Multi, s) => s,
        (_, Some(s)) => Some(s),
        (_, None) => Some(checked_score(model2, ModelRole::Passage, &record.title)?),
    };
    Ok(ScoredRecord {
        id: record.id.clone(),
        gold,
        prediction,
        model2_score,
    })
}

pub fn evaluate_cascade<M1, M2>(
    corpus: &Corpus,
    model1: &M1,
    model2: &M2,
    config: &CascadeConfig,
) -> Result<CascadeReport, CascadeError>
where
    M1: BinaryScorer + ?Sized,
    M2: BinaryScorer + ?Sized,
{
    config.validate()?;
    let records = corpus
        .records
        .iter()
        .map(|r| score_record(r, model1, model2, config))
        .collect::<Result<Vec<_>, _>>()?;
    let (m1, m2, all, confusion) = cascade_metrics(&records, config)?;
    Ok(CascadeReport {
        model1_balanced_accuracy: m1,
        model2_balanced_accuracy: m2,
        cascade_balanced_accuracy: all,
        confusion,
        records,
    })
}

/// Looks up a fixed score per title; handy as an oracle scorer in tests and
/// for replaying persisted scores.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    pub scores: std::collections::HashMap<String, f64>,
    pub default: f64,
}

impl TableScorer {
    pub fn constant(score: f64) -> Self {
        TableScorer {
            scores: Default::default(),
            default: score,
        }
    }
}

impl BinaryScorer for TableScorer {
    fn score(&self, text: &str) -> Result<f64, ScorerError> {
        Ok(self.scores.get(text).copied().unwrap_or(self.default))
    }
}
