//! Offline stand-in for the fine-tuned transformer classifiers: logistic
//! regression over hashed character n-grams of the title, trained by
//! mini-batch gradient descent with L2 weight decay.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BinaryScorer, ScorerError};
use crate::corpus::{Corpus, Record, SpoilerTag};

const HASH_BITS: u32 = 18;
const DIM: usize = 1 << HASH_BITS;
const MIN_GRAM: usize = 3;
const MAX_GRAM: usize = 5;

/// The two binary problems of the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinaryTask {
    MultiVsRest,
    PassageVsPhrase,
}

impl BinaryTask {
    /// Positive/negative label for a record, or `None` if the record does not
    /// take part in this task.
    pub fn label(self, record: &Record) -> Option<bool> {
        let tag = record.tag?;
        match self {
            BinaryTask::MultiVsRest => Some(tag == SpoilerTag::Multi),
            BinaryTask::PassageVsPhrase => match tag {
                SpoilerTag::Multi => None,
                t => Some(t == SpoilerTag::Passage),
            },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryTask::MultiVsRest => "multi-vs-rest",
            BinaryTask::PassageVsPhrase => "passage-vs-phrase",
        }
    }
}

impl fmt::Display for BinaryTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BinaryTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multi-vs-rest" | "multi" | "model1" => Ok(BinaryTask::MultiVsRest),
            "passage-vs-phrase" | "passage" | "model2" => Ok(BinaryTask::PassageVsPhrase),
            other => Err(format!("unknown task `{other}` (expected multi-vs-rest or passage-vs-phrase)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl HyperParams {
    /// Best configuration reported for the multi-vs-rest model.
    pub const MODEL1_REPORTED: HyperParams = HyperParams {
        batch_size: 16,
        epochs: 4,
        learning_rate: 5.9e-6,
        weight_decay: 0.4,
    };

    /// Best configuration reported for the passage-vs-phrase model.
    pub const MODEL2_REPORTED: HyperParams = HyperParams {
        batch_size: 16,
        epochs: 2,
        learning_rate: 8.2e-6,
        weight_decay: 0.5,
    };

    pub fn reported_for(task: BinaryTask) -> HyperParams {
        match task {
            BinaryTask::MultiVsRest => Self::MODEL1_REPORTED,
            BinaryTask::PassageVsPhrase => Self::MODEL2_REPORTED,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |why: &str| Err(TrainError::InvalidHyperParams(format!("{why}: {self:?}")));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive and finite");
        }
        if !(0.0..1.0).contains(&self.weight_decay) {
            return bad("weight decay must lie in [0, 1)");
        }
        if self.learning_rate * self.weight_decay >= 1.0 {
            return bad("learning rate times weight decay must stay below 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("task {task} needs both classes, corpus has only {present}")]
    SingleClass { task: BinaryTask, present: &'static str },
    #[error("no training examples for task {0}")]
    NoExamples(BinaryTask),
    #[error("loss became non-finite in epoch {epoch}; learning rate {learning_rate} is too large")]
    NonFiniteLoss { epoch: usize, learning_rate: f64 },
    #[error("invalid hyperparameters ({0})")]
    InvalidHyperParams(String),
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// L2-normalized counts of hashed character 3–5-grams of the lowercased,
/// space-padded text. Sorted by bucket index.
pub fn hashed_features(text: &str) -> Vec<(u32, f64)> {
    let padded: Vec<char> = format!(" {} ", text.to_lowercase()).chars().collect();
    let mut buckets: Vec<u32> = Vec::new();
    let mut buf = String::new();
    for n in MIN_GRAM..=MAX_GRAM {
        for w in padded.windows(n) {
            buf.clear();
            buf.extend(w);
            buckets.push((fnv1a(buf.as_bytes()) & (DIM as u64 - 1)) as u32);
        }
    }
    buckets.sort_unstable();
    let mut feats: Vec<(u32, f64)> = Vec::new();
    for b in buckets {
        match feats.last_mut() {
            Some((last, c)) if *last == b => *c += 1.0,
            _ => feats.push((b, 1.0)),
        }
    }
    let norm = feats.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, c) in &mut feats {
            *c /= norm;
        }
    }
    feats
}

/// A trained logistic-regression scorer.
///
/// Weights are kept as `scale * raw` so weight decay costs O(1) per step.
#[derive(Debug, Clone)]
pub struct BaselineScorer {
    task: BinaryTask,
    raw: Vec<f64>,
    scale: f64,
    bias: f64,
    loss_history: Vec<f64>,
}

impl BaselineScorer {
    pub fn task(&self) -> BinaryTask {
        self.task
    }

    /// Regularized training loss after each epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    fn logit(&self, feats: &[(u32, f64)]) -> f64 {
        let dot: f64 = feats.iter().map(|&(j, x)| self.raw[j as usize] * x).sum();
        self.scale * dot + self.bias
    }

    pub fn probability(&self, text: &str) -> f64 {
        sigmoid(self.logit(&hashed_features(text)))
    }
}

impl BinaryScorer for BaselineScorer {
    fn score(&self, text: &str) -> Result<f64, ScorerError> {
        Ok(self.probability(text))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

struct Example {
    feats: Vec<(u32, f64)>,
    y: f64,
}

fn examples(corpus: &Corpus, task: BinaryTask) -> Result<Vec<Example>, TrainError> {
    let ex: Vec<Example> = corpus
        .records
        .iter()
        .filter_map(|r| {
            task.label(r).map(|y| Example {
                feats: hashed_features(&r.title),
                y: if y { 1.0 } else { 0.0 },
            })
        })
        .collect();
    if ex.is_empty() {
        return Err(TrainError::NoExamples(task));
    }
    let positives = ex.iter().filter(|e| e.y > 0.5).count();
    if positives == 0 || positives == ex.len() {
        let present = if positives == 0 { "negatives" } else { "positives" };
        return Err(TrainError::SingleClass { task, present });
    }
    Ok(ex)
}

fn regularized_loss(model: &BaselineScorer, data: &[Example], weight_decay: f64) -> f64 {
    let data_loss: f64 = data
        .iter()
        .map(|e| {
            let z = model.logit(&e.feats);
            softplus(z) - e.y * z
        })
        .sum::<f64>()
        / data.len() as f64;
    let sq: f64 = model.raw.iter().map(|w| w * w).sum();
    data_loss + 0.5 * weight_decay * model.scale * model.scale * sq
}

pub fn train_baseline(
    corpus: &Corpus,
    task: BinaryTask,
    hp: &HyperParams,
    seed: u64,
) -> Result<BaselineScorer, TrainError> {
    hp.validate()?;
    let data = examples(corpus, task)?;
    let mut model = BaselineScorer {
        task,
        raw: vec![0.0; DIM],
        scale: 1.0,
        bias: 0.0,
        loss_history: Vec::with_capacity(hp.epochs),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let lr = hp.learning_rate;
    let decay = 1.0 - lr * hp.weight_decay;
    let mut residuals = Vec::with_capacity(hp.batch_size);

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            residuals.clear();
            residuals.extend(batch.iter().map(|&i| sigmoid(model.logit(&data[i].feats)) - data[i].y));
            let m = batch.len() as f64;

            model.scale *= decay;
            let step = lr / (m * model.scale);
            for (&i, &r) in batch.iter().zip(&residuals) {
                for &(j, x) in &data[i].feats {
                    model.raw[j as usize] -= step * r * x;
                }
            }
            model.bias -= lr * residuals.iter().sum::<f64>() / m;

            if model.scale < 1e-150 {
                for w in &mut model.raw {
                    *w *= model.scale;
                }
                model.scale = 1.0;
            }
        }
        let loss = regularized_loss(&model, &data, hp.weight_decay);
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch: epoch + 1,
                learning_rate: lr,
            });
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}
