//! Task 1 (classification) and Task 2 (spoiling) over a whole corpus.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use super::backend::{BackendClient, RemoteScorer};
use super::cache::{sha256_hex, CachedBackend, CompletionCache};
use super::config::{ClassifierBackend, ConfigError, RunConfig};
use super::persist::PersistError;
use super::report::{evaluate, EvalError, PredictionRow, Provenance, RowScores, RunReport};
use crate::cascade::{
    predict_tag, score_record, train_baseline, BinaryScorer, BinaryTask, CascadeConfig, CascadeError, TagPrediction,
    TrainError,
};
use crate::corpus::{parse_corpus, Corpus, CorpusError, SpoilerTag};
use crate::spoiler::{spoil, CompletionBackend, ExemplarError, ExemplarSet, SpoilContext, SpoilError, SpoilMode};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: CorpusError },
    #[error("{0}")]
    Input(String),
    #[error("training {task}: {source}")]
    Train { task: BinaryTask, source: TrainError },
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error("record `{id}`: {source}")]
    Spoil { id: String, source: SpoilError },
    #[error(transparent)]
    Exemplar(#[from] ExemplarError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("cache: {0}")]
    Cache(std::io::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Corpora for one run plus the digests of the files they came from.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub train: Option<Corpus>,
    pub eval: Corpus,
    pub digests: BTreeMap<String, String>,
}

fn load(path: &Path, split: &str, strict: bool, digests: &mut BTreeMap<String, String>) -> Result<Corpus, RunError> {
    let corpus_err = |source| RunError::Corpus {
        path: path.to_path_buf(),
        source,
    };
    let bytes = std::fs::read(path).map_err(|source| {
        corpus_err(CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    })?;
    digests.insert(path.display().to_string(), sha256_hex(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|e| RunError::Input(format!("{}: not valid UTF-8: {e}", path.display())))?;
    parse_corpus(&text, split, strict).map_err(corpus_err)
}

impl Inputs {
    /// Loads the train split from the config and the evaluated split from
    /// `eval_path`, falling back to the config's validation path.
    pub fn load(cfg: &RunConfig, eval_path: Option<&Path>, split: &str) -> Result<Self, RunError> {
        let mut digests = BTreeMap::new();
        let train = match &cfg.corpus.train {
            Some(p) => Some(load(p, "train", cfg.corpus.strict, &mut digests)?),
            None => None,
        };
        let eval_path = eval_path
            .map(Path::to_path_buf)
            .or_else(|| cfg.corpus.validation.clone())
            .ok_or_else(|| RunError::Input("no corpus given (use --corpus or corpus.validation)".into()))?;
        let eval = load(&eval_path, split, cfg.corpus.strict, &mut digests)?;
        Ok(Inputs { train, eval, digests })
    }

    pub fn from_corpora(train: Option<Corpus>, eval: Corpus) -> Self {
        Inputs {
            train,
            eval,
            digests: BTreeMap::new(),
        }
    }
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))
}

pub struct Classifiers {
    pub model1: Box<dyn BinaryScorer>,
    pub model2: Box<dyn BinaryScorer>,
}

/// Native baselines trained on the train split, or remote scorers.
pub fn build_classifiers(cfg: &RunConfig, train: Option<&Corpus>) -> Result<Classifiers, RunError> {
    match cfg.classification.backend {
        ClassifierBackend::NativeBaseline => {
            let train = train.ok_or_else(|| {
                RunError::Input("the native baseline needs a training corpus (corpus.train or --train)".into())
            })?;
            let fit = |task| {
                let hp = cfg.classification.hyper_params(task);
                tracing::info!(task = %task, ?hp, records = train.len(), "training baseline");
                train_baseline(train, task, &hp, cfg.seed).map_err(|source| RunError::Train { task, source })
            };
            Ok(Classifiers {
                model1: Box::new(fit(BinaryTask::MultiVsRest)?),
                model2: Box::new(fit(BinaryTask::PassageVsPhrase)?),
            })
        }
        ClassifierBackend::Remote => {
            let client = Arc::new(BackendClient::new(cfg.backend.settings()));
            Ok(Classifiers {
                model1: Box::new(RemoteScorer::new(Arc::clone(&client), &cfg.classification.multi_model)),
                model2: Box::new(RemoteScorer::new(client, &cfg.classification.passage_model)),
            })
        }
    }
}

/// Cascade prediction per record. For labeled records Model 2 is also scored
/// on gold non-multi titles the cascade routed to multi, so its own accuracy
/// can be measured.
pub fn classify_records(
    corpus: &Corpus,
    classifiers: &Classifiers,
    cascade: &CascadeConfig,
    workers: usize,
) -> Result<Vec<(TagPrediction, Option<f64>)>, RunError> {
    cascade.validate()?;
    let (m1, m2) = (classifiers.model1.as_ref(), classifiers.model2.as_ref());
    let pool = thread_pool(workers)?;
    let out: Result<Vec<_>, CascadeError> = pool.install(|| {
        corpus
            .records
            .par_iter()
            .map(|r| {
                if r.is_labeled() {
                    score_record(r, m1, m2, cascade).map(|s| (s.prediction, s.model2_score))
                } else {
                    predict_tag(&r.title, m1, m2, cascade).map(|p| {
                        let s = p.passage_score;
                        (p, s)
                    })
                }
            })
            .collect()
    });
    Ok(out?)
}

/// Where spoiling takes each record's spoiler type from.
#[derive(Debug, Clone)]
pub enum TagSource {
    /// Run the cascade first.
    Predict,
    /// Gold tags; ablation only.
    Gold,
    /// Tags (and scores) from an earlier `classify` run.
    Given(Vec<PredictionRow>),
}

/// Exemplars from the train split, the bundled ones for missing tags, then
/// any pinned ids.
pub fn exemplars(cfg: &RunConfig, train: Option<&Corpus>) -> Result<ExemplarSet, RunError> {
    let mut set = match train {
        Some(t) => ExemplarSet::from_corpus(t).or_else(ExemplarSet::builtin()),
        None => ExemplarSet::builtin(),
    };
    for (tag, id) in &cfg.spoiling.exemplar_ids {
        let train = train.ok_or_else(|| RunError::Input("spoiling.exemplar_ids needs corpus.train".into()))?;
        set = set.with_override(train, id, *tag)?;
    }
    Ok(set)
}

/// Completion backend for generative and fallback modes: the HTTP client,
/// behind the on-disk cache when one is configured.
pub fn completion_backend(cfg: &RunConfig) -> Result<Option<Box<dyn CompletionBackend>>, RunError> {
    if cfg.spoiling.mode == SpoilMode::Extractive {
        return Ok(None);
    }
    let client = BackendClient::new(cfg.backend.settings());
    Ok(Some(match &cfg.backend.cache_dir {
        Some(dir) => Box::new(CachedBackend::new(
            client,
            CompletionCache::open(dir).map_err(RunError::Cache)?,
        )),
        None => Box::new(client),
    }))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<PredictionRow>,
    pub report: RunReport,
}

fn finish(cfg: &RunConfig, inputs: &Inputs, rows: Vec<PredictionRow>) -> Result<RunOutput, RunError> {
    let (task1, task2) = if inputs.eval.is_labeled() && !inputs.eval.is_empty() {
        evaluate(
            &inputs.eval,
            &rows,
            &cfg.classification.cascade(),
            cfg.report.bleu_aggregation,
        )?
    } else {
        (None, None)
    };
    let report = RunReport {
        task1,
        task2,
        provenance: Provenance::now(Some(cfg.digest()), inputs.digests.clone(), cfg.seed),
    };
    Ok(RunOutput { rows, report })
}

fn classified_rows(inputs: &Inputs, classifiers: &Classifiers, cfg: &RunConfig) -> Result<Vec<PredictionRow>, RunError> {
    let preds = classify_records(&inputs.eval, classifiers, &cfg.classification.cascade(), cfg.workers)?;
    Ok(inputs
        .eval
        .records
        .iter()
        .zip(preds)
        .map(|(r, (p, m2))| PredictionRow {
            id: r.id.clone(),
            predicted_tag: p.tag,
            spoiler_texts: Vec::new(),
            method: None,
            scores: RowScores {
                multi: Some(p.multi_score),
                passage: m2,
            },
        })
        .collect())
}

/// Task 1 over the evaluated split.
pub fn run_classify(cfg: &RunConfig, inputs: &Inputs, classifiers: &Classifiers) -> Result<RunOutput, RunError> {
    if inputs.eval.is_empty() {
        return Err(RunError::Input(format!("corpus `{}` is empty", inputs.eval.split)));
    }
    let rows = classified_rows(inputs, classifiers, cfg)?;
    finish(cfg, inputs, rows)
}

/// Task 2 over the evaluated split, with tags from `source`.
pub fn run_spoil(
    cfg: &RunConfig,
    inputs: &Inputs,
    source: TagSource,
    classifiers: Option<&Classifiers>,
    backend: Option<&dyn CompletionBackend>,
) -> Result<RunOutput, RunError> {
    let eval = &inputs.eval;
    if eval.is_empty() {
        return Err(RunError::Input(format!("corpus `{}` is empty", eval.split)));
    }
    let mut rows: Vec<PredictionRow> = match source {
        TagSource::Predict => {
            let c = classifiers.ok_or_else(|| RunError::Input("tag prediction needs classifiers".into()))?;
            classified_rows(inputs, c, cfg)?
        }
        TagSource::Gold => eval
            .records
            .iter()
            .map(|r| {
                let tag = r
                    .tag
                    .ok_or_else(|| RunError::Input(format!("--gold-tags: record `{}` is unlabeled", r.id)))?;
                Ok(PredictionRow {
                    id: r.id.clone(),
                    predicted_tag: tag,
                    spoiler_texts: Vec::new(),
                    method: None,
                    scores: RowScores::default(),
                })
            })
            .collect::<Result<_, RunError>>()?,
        TagSource::Given(given) => {
            let mut by_id: BTreeMap<String, PredictionRow> = given.into_iter().map(|r| (r.id.clone(), r)).collect();
            eval.records
                .iter()
                .map(|r| {
                    by_id
                        .remove(&r.id)
                        .map(|mut row| {
                            row.spoiler_texts.clear();
                            row.method = None;
                            row
                        })
                        .ok_or_else(|| RunError::Input(format!("no classification for record `{}`", r.id)))
                })
                .collect::<Result<_, RunError>>()?
        }
    };

    let exemplars = exemplars(cfg, inputs.train.as_ref())?;
    let ctx = SpoilContext {
        mode: cfg.spoiling.mode,
        backend,
        exemplars: &exemplars,
        prompt_budget: cfg.spoiling.prompt_budget,
        max_output_tokens: cfg.spoiling.max_output_tokens,
        extract: cfg.spoiling.extract,
    };
    let tags: Vec<SpoilerTag> = rows.iter().map(|r| r.predicted_tag).collect();
    let pool = thread_pool(cfg.workers)?;
    let spoilers: Result<Vec<_>, RunError> = pool.install(|| {
        eval.records
            .par_iter()
            .zip(tags.par_iter())
            .map(|(r, tag)| {
                spoil(r, *tag, &ctx).map_err(|source| RunError::Spoil {
                    id: r.id.clone(),
                    source,
                })
            })
            .collect()
    });
    for (row, s) in rows.iter_mut().zip(spoilers?) {
        row.spoiler_texts = s.texts;
        row.method = Some(s.method);
    }
    finish(cfg, inputs, rows)
}
