//! Seeded random search over the baseline's hyperparameters.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::baseline::{train_baseline, BaselineScorer, BinaryTask, HyperParams};
use crate::corpus::Corpus;
use crate::metrics::balanced_accuracy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    /// Sampled log-uniformly.
    pub lr_range: (f64, f64),
    pub weight_decays: Vec<f64>,
}

impl Default for SearchSpace {
    /// The space searched for both cascade models.
    fn default() -> Self {
        SearchSpace {
            batch_sizes: vec![8, 12, 16],
            epochs: vec![2, 3, 4, 5],
            lr_range: (1e-5, 1e-3),
            weight_decays: vec![0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("search space has no candidate {0}")]
    EmptyCandidates(&'static str),
    #[error("invalid learning-rate range ({0}, {1})")]
    BadLearningRateRange(f64, f64),
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error("{0} split lacks one of the two classes for this task")]
    DegenerateSplit(&'static str),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.batch_sizes.is_empty() {
            return Err(SweepError::EmptyCandidates("batch sizes"));
        }
        if self.epochs.is_empty() {
            return Err(SweepError::EmptyCandidates("epoch counts"));
        }
        if self.weight_decays.is_empty() {
            return Err(SweepError::EmptyCandidates("weight decays"));
        }
        let (lo, hi) = self.lr_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(SweepError::BadLearningRateRange(lo, hi));
        }
        Ok(())
    }
}

/// Draws `count` configurations: discrete fields uniformly, learning rate
/// log-uniformly.
pub fn sample_configs(space: &SearchSpace, count: usize, seed: u64) -> Result<Vec<HyperParams>, SweepError> {
    space.validate()?;
    if count == 0 {
        return Err(SweepError::NoTrials);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (space.lr_range.0.ln(), space.lr_range.1.ln());
    Ok((0..count)
        .map(|_| {
            let batch_size = *space.batch_sizes.choose(&mut rng).unwrap();
            let epochs = *space.epochs.choose(&mut rng).unwrap();
            let u: f64 = rng.gen();
            let learning_rate = (lo + u * (hi - lo)).exp().clamp(space.lr_range.0, space.lr_range.1);
            let weight_decay = *space.weight_decays.choose(&mut rng).unwrap();
            HyperParams {
                batch_size,
                epochs,
                learning_rate,
                weight_decay,
            }
        })
        .collect())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic 80/20 split on a hash of each record's position.
pub fn split_holdout(corpus: &Corpus) -> (Corpus, Corpus) {
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, r) in corpus.records.iter().enumerate() {
        if splitmix64(i as u64).is_multiple_of(5) {
            held.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    (
        Corpus::new(format!("{}-train", corpus.split), train),
        Corpus::new(format!("{}-holdout", corpus.split), held),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub model_id: String,
    pub params: HyperParams,
    pub balanced_accuracy: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub params: HyperParams,
    pub seed: u64,
    pub error: String,
}

/// Pearson correlation between one hyperparameter and held-out accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCorrelation {
    pub parameter: String,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub task: BinaryTask,
    pub seed: u64,
    pub trials: usize,
    /// Sorted by descending balanced accuracy, ties by trial number.
    pub results: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    pub correlations: Vec<ParamCorrelation>,
}

impl SweepReport {
    pub fn best(&self) -> Option<&TrialResult> {
        self.results.first()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Upper bound on concurrently running trials; 0 means one per core.
    pub workers: usize,
    /// Evaluate on this split instead of a hashed 20% slice of the corpus.
    pub validation: Option<Corpus>,
}

fn holdout_accuracy(model: &BaselineScorer, task: BinaryTask, holdout: &Corpus) -> f64 {
    let pairs: Vec<(bool, bool)> = holdout
        .records
        .iter()
        .filter_map(|r| task.label(r).map(|y| (y, model.probability(&r.title) >= 0.5)))
        .collect();
    balanced_accuracy(&pairs).unwrap_or(0.0)
}

fn has_both(corpus: &Corpus, task: BinaryTask) -> bool {
    let labels: Vec<bool> = corpus.records.iter().filter_map(|r| task.label(r)).collect();
    labels.iter().any(|&y| y) && labels.iter().any(|&y| !y)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn correlations(results: &[TrialResult]) -> Vec<ParamCorrelation> {
    let acc: Vec<f64> = results.iter().map(|r| r.balanced_accuracy).collect();
    type Column = (&'static str, fn(&HyperParams) -> f64);
    let columns: [Column; 4] = [
        ("batch_size", |p| p.batch_size as f64),
        ("epochs", |p| p.epochs as f64),
        ("log10_learning_rate", |p| p.learning_rate.log10()),
        ("weight_decay", |p| p.weight_decay),
    ];
    columns
        .iter()
        .map(|(name, f)| {
            let xs: Vec<f64> = results.iter().map(|r| f(&r.params)).collect();
            ParamCorrelation {
                parameter: name.to_string(),
                pearson: pearson(&xs, &acc),
            }
        })
        .collect()
}

/// Trains one baseline per sampled configuration and ranks them by held-out
/// balanced accuracy. Failed trials are recorded, not fatal.
pub fn run_sweep(
    corpus: &Corpus,
    task: BinaryTask,
    space: &SearchSpace,
    trials: usize,
    seed: u64,
    options: &SweepOptions,
) -> Result<SweepReport, SweepError> {
    let configs = sample_configs(space, trials, seed)?;
    let (train, holdout) = match &options.validation {
        Some(v) => (corpus.clone(), v.clone()),
        None => split_holdout(corpus),
    };
    if !has_both(&train, task) {
        return Err(SweepError::DegenerateSplit("training"));
    }
    if !has_both(&holdout, task) {
        return Err(SweepError::DegenerateSplit("held-out"));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let outcomes: Vec<Result<TrialResult, TrialFailure>> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(trial, params)| {
                let trial_seed = seed.wrapping_add(trial as u64);
                match train_baseline(&train, task, params, trial_seed) {
                    Ok(model) => Ok(TrialResult {
                        trial,
                        model_id: task.to_string(),
                        params: *params,
                        balanced_accuracy: holdout_accuracy(&model, task, &holdout),
                        seed: trial_seed,
                    }),
                    Err(e) => {
                        tracing::warn!(trial, "trial failed: {e}");
                        Err(TrialFailure {
                            trial,
                            params: *params,
                            seed: trial_seed,
                            error: e.to_string(),
                        })
                    }
                }
            })
            .collect()
    });

    let (mut results, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    results.sort_by(|a, b| {
        b.balanced_accuracy
            .total_cmp(&a.balanced_accuracy)
            .then(a.trial.cmp(&b.trial))
    });
    let correlations = correlations(&results);
    Ok(SweepReport {
        task,
        seed,
        trials,
        results,
        failures,
        correlations,
    })
}
