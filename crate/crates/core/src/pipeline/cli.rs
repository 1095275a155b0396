//! Command-line front end.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use super::config::{BleuReporting, ClassifierBackend, RunConfig};
use super::mock::{MockBehavior, MockServer};
use super::persist::{load_predictions, load_report, persist_run, PREDICTIONS_FILE, REPORT_FILE};
use super::report::{evaluate, Provenance, RunReport};
use super::run::{build_classifiers, completion_backend, run_classify, run_spoil, Inputs, RunOutput, TagSource};
use crate::cascade::{run_sweep, BinaryTask, CascadeConfig, SweepOptions};
use crate::corpus::{corpus_stats, load_corpus, Corpus, SpoilerTag};
use crate::spoiler::SpoilMode;
use crate::synth;

#[derive(Debug, Parser)]
#[command(name = "clickspoil", version, about = "Clickbait spoiler-type classification, spoiling and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus to operate on (JSONL).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Split name used in reports; defaults to the corpus file stem.
    #[arg(long, global = true)]
    split: Option<String>,
    /// Spoiling mode: generative, extractive or fallback.
    #[arg(long, global = true)]
    mode: Option<SpoilMode>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Treat record validation violations as errors.
    #[arg(long, global = true)]
    strict: bool,
    /// Output directory (run commands) or file (synth).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    backend_url: Option<String>,
    /// sentence-mean, pooled or both.
    #[arg(long, global = true)]
    bleu_aggregation: Option<BleuReporting>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a corpus and print per-tag statistics.
    Validate {
        #[arg(long)]
        json: bool,
    },
    /// Task 1: predict spoiler types with the two-model cascade.
    Classify {
        /// Training corpus for the native baseline.
        #[arg(long)]
        train: Option<PathBuf>,
        /// native-baseline or remote.
        #[arg(long)]
        classifier: Option<ClassifierBackend>,
    },
    /// Seeded random search over baseline hyperparameters.
    Sweep {
        /// multi-vs-rest or passage-vs-phrase.
        #[arg(long)]
        task: Option<BinaryTask>,
        #[arg(long)]
        trials: Option<usize>,
        /// Evaluate on this corpus instead of a hashed 20% holdout.
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Task 2: produce spoilers, using predicted spoiler types by default.
    Spoil {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<ClassifierBackend>,
        /// Take spoiler types from an earlier classify run.
        #[arg(long, conflicts_with = "gold_tags")]
        predictions: Option<PathBuf>,
        /// Use gold spoiler types instead of predictions (ablation).
        #[arg(long)]
        gold_tags: bool,
    },
    /// Score a predictions file or run directory against a gold corpus.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Render a persisted report.
    Report {
        /// Run directory or report.json.
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write a seeded synthetic corpus.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long, default_value_t = 200)]
        count: usize,
    },
    /// Serve the mock scoring/completion backend until killed.
    ServeMock {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Score returned for unknown texts.
        #[arg(long, default_value_t = 0.5)]
        score: f64,
        /// JSON object `{model: {text: score}}`.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Title vocabulary separates the spoiler types.
    Separable,
    /// Gold spoilers are planted verbatim article spans.
    Verbatim,
}

fn init_logging(verbose: u8) {
    use tracing_subscriber::EnvFilter;
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .without_time()
        .try_init();
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    let mut stdout = std::io::stdout().lock();
    match execute(&cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            1
        }
    }
}

/// The error chain on one line, skipping causes already quoted by the
/// message above them.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg.replace('\n', " ")
}

fn split_name(cli: &Cli, path: &Path) -> String {
    cli.split.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into())
    })
}

/// Loads the config (or defaults) and applies command-line overrides.
fn effective_config(cli: &Cli, train: Option<&PathBuf>, classifier: Option<ClassifierBackend>) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.corpus.strict |= cli.strict;
    if let Some(m) = cli.mode {
        cfg.spoiling.mode = m;
    }
    if let Some(u) = &cli.backend_url {
        cfg.backend.base_url = u.clone();
    }
    if let Some(b) = cli.bleu_aggregation {
        cfg.report.bleu_aggregation = b;
    }
    if let Some(t) = train {
        cfg.corpus.train = Some(t.clone());
    }
    if let Some(c) = classifier {
        cfg.classification.backend = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn corpus_path<'a>(cli: &'a Cli, cfg: &'a RunConfig) -> Result<&'a Path> {
    cli.corpus
        .as_deref()
        .or(cfg.corpus.validation.as_deref())
        .context("no corpus given (use --corpus or corpus.validation in the config)")
}

fn finish_run(cli: &Cli, out: &mut dyn Write, result: RunOutput) -> Result<()> {
    if let Some(dir) = &cli.out {
        persist_run(&result.report, &result.rows, dir)?;
        writeln!(out, "wrote {} predictions to {}", result.rows.len(), dir.join(PREDICTIONS_FILE).display())?;
    }
    write!(out, "{}", result.report.render_text())?;
    Ok(())
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Validate { json } => {
            let cfg = effective_config(cli, None, None)?;
            let path = corpus_path(cli, &cfg)?;
            let corpus = load_corpus(path, &split_name(cli, path), cfg.corpus.strict)?;
            let stats = corpus_stats(&corpus);
            if *json {
                writeln!(out, "{}", serde_json::to_string_pretty(&stats)?)?;
            } else {
                writeln!(
                    out,
                    "split {}: {} records, {} unlabeled, {} violations",
                    stats.split, stats.record_count, stats.unlabeled, stats.violations
                )?;
                for tag in SpoilerTag::ALL {
                    let n = stats.tag_counts.get(&tag).copied().unwrap_or(0);
                    let f = stats.tag_fractions.get(&tag).copied().unwrap_or(0.0);
                    writeln!(out, "{tag}: {n} ({:.1}%)", 100.0 * f)?;
                }
                for v in &corpus.violations {
                    writeln!(out, "violation: record {}: {}", v.record_id, v.message)?;
                }
            }
        }
        Command::Classify { train, classifier } => {
            let cfg = effective_config(cli, train.as_ref(), *classifier)?;
            let path = corpus_path(cli, &cfg)?.to_path_buf();
            let inputs = Inputs::load(&cfg, Some(&path), &split_name(cli, &path))?;
            let classifiers = build_classifiers(&cfg, inputs.train.as_ref())?;
            finish_run(cli, out, run_classify(&cfg, &inputs, &classifiers)?)?;
        }
        Command::Spoil {
            train,
            classifier,
            predictions,
            gold_tags,
        } => {
            let cfg = effective_config(cli, train.as_ref(), *classifier)?;
            let path = corpus_path(cli, &cfg)?.to_path_buf();
            let inputs = Inputs::load(&cfg, Some(&path), &split_name(cli, &path))?;
            let (source, classifiers) = match (predictions, gold_tags) {
                (Some(p), _) => (TagSource::Given(load_predictions(p)?), None),
                (None, true) => (TagSource::Gold, None),
                (None, false) => (TagSource::Predict, Some(build_classifiers(&cfg, inputs.train.as_ref())?)),
            };
            let backend = completion_backend(&cfg)?;
            let result = run_spoil(&cfg, &inputs, source, classifiers.as_ref(), backend.as_deref())?;
            finish_run(cli, out, result)?;
        }
        Command::Sweep {
            task,
            trials,
            validation,
            workers,
        } => {
            let cfg = effective_config(cli, None, None)?;
            let path = cli
                .corpus
                .as_deref()
                .or(cfg.corpus.train.as_deref())
                .context("no corpus given (use --corpus or corpus.train in the config)")?;
            let corpus = load_corpus(path, &split_name(cli, path), cfg.corpus.strict)?;
            let validation = match validation {
                Some(v) => Some(load_corpus(v, "validation", cfg.corpus.strict)?),
                None => None,
            };
            let task = task.unwrap_or(cfg.sweep.task);
            let opts = SweepOptions {
                workers: workers.unwrap_or(cfg.workers),
                validation,
            };
            let report = run_sweep(
                &corpus,
                task,
                &cfg.sweep.space,
                trials.unwrap_or(cfg.sweep.trials),
                cfg.seed,
                &opts,
            )?;
            writeln!(out, "sweep {task}: {} trials, seed {}", report.trials, report.seed)?;
            writeln!(out, "{:>5}  {:>8}  {:>5}  {:>6}  {:>10}  {:>4}", "trial", "accuracy", "batch", "epochs", "lr", "wd")?;
            for r in &report.results {
                writeln!(
                    out,
                    "{:>5}  {:>8.4}  {:>5}  {:>6}  {:>10.3e}  {:>4}",
                    r.trial,
                    r.balanced_accuracy,
                    r.params.batch_size,
                    r.params.epochs,
                    r.params.learning_rate,
                    r.params.weight_decay
                )?;
            }
            for f in &report.failures {
                writeln!(out, "trial {} failed: {}", f.trial, f.error)?;
            }
            for c in &report.correlations {
                match c.pearson {
                    Some(p) => writeln!(out, "correlation {}: {p:+.3}", c.parameter)?,
                    None => writeln!(out, "correlation {}: undefined", c.parameter)?,
                }
            }
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let file = dir.join("sweep.json");
                std::fs::write(&file, serde_json::to_string_pretty(&report)? + "\n")
                    .with_context(|| format!("writing {}", file.display()))?;
                writeln!(out, "wrote {}", file.display())?;
            }
        }
        Command::Evaluate { predictions } => evaluate_command(cli, out, predictions)?,
        Command::Report { path, json } => {
            let report = load_report(path)?;
            if *json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write!(out, "{}", report.render_text())?;
            }
        }
        Command::Synth { kind, count } => {
            let seed = match &cli.config {
                Some(_) => effective_config(cli, None, None)?.seed,
                None => cli.seed.unwrap_or(0),
            };
            let corpus = match kind {
                SynthKind::Separable => synth::separable_corpus(*count, seed),
                SynthKind::Verbatim => synth::verbatim_corpus(*count, seed),
            };
            match &cli.out {
                Some(p) => {
                    std::fs::write(p, corpus.to_jsonl()).with_context(|| format!("writing {}", p.display()))?;
                    writeln!(out, "wrote {} records to {}", corpus.len(), p.display())?;
                }
                None => write!(out, "{}", corpus.to_jsonl())?,
            }
        }
        Command::ServeMock { addr, score, scores } => {
            if !(0.0..=1.0).contains(score) {
                bail!("--score must lie in [0, 1]");
            }
            let behavior = match scores {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    let nested: HashMap<String, HashMap<String, f64>> =
                        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
                    let table = nested
                        .into_iter()
                        .flat_map(|(m, t)| t.into_iter().map(move |(k, v)| ((m.clone(), k), v)))
                        .collect();
                    MockBehavior::score_table(table, *score)
                }
                None => MockBehavior::constant_score(*score),
            };
            let server = MockServer::start_on(addr, behavior).with_context(|| format!("binding {addr}"))?;
            writeln!(out, "mock backend listening on {}", server.url())?;
            out.flush()?;
            server.join();
        }
    }
    Ok(())
}

fn evaluate_command(cli: &Cli, out: &mut dyn Write, predictions: &Path) -> Result<()> {
    let cfg = effective_config(cli, None, None)?;
    let rows = load_predictions(predictions)?;
    let gold_path = corpus_path(cli, &cfg)?;
    let gold: Corpus = load_corpus(gold_path, &split_name(cli, gold_path), cfg.corpus.strict)?;

    let run_dir = if predictions.is_dir() {
        predictions.to_path_buf()
    } else {
        predictions.parent().unwrap_or(Path::new(".")).to_path_buf()
    };
    let persisted = run_dir.join(REPORT_FILE);
    let persisted = if persisted.exists() { Some(load_report(&persisted)?) } else { None };

    // Thresholds: config first, then those the run was made with.
    let cascade = match (&cli.config, persisted.as_ref().and_then(|r| r.task1.as_ref())) {
        (None, Some(t)) => CascadeConfig::new(t.multi_threshold, t.passage_threshold)?,
        _ => cfg.classification.cascade(),
    };
    let reporting = match (cli.bleu_aggregation, &cli.config, persisted.as_ref().and_then(|r| r.task2.as_ref())) {
        (None, None, Some(t)) => t.aggregation,
        _ => cfg.report.bleu_aggregation,
    };
    let (task1, task2) = evaluate(&gold, &rows, &cascade, reporting)?;
    let mut digests = std::collections::BTreeMap::new();
    digests.insert(
        gold_path.display().to_string(),
        super::cache::sha256_hex(&std::fs::read(gold_path)?),
    );
    let report = RunReport {
        task1,
        task2,
        provenance: Provenance::now(cli.config.as_ref().map(|_| cfg.digest()), digests, cfg.seed),
    };
    write!(out, "{}", report.render_text())?;
    if let Some(p) = &persisted {
        match report.max_metric_difference(p) {
            Ok(d) => writeln!(out, "\npersisted report reproduced: max |difference| {d:.3e}")?,
            Err(e) => writeln!(out, "\npersisted report not comparable: {e}")?,
        }
    }
    if let Some(dir) = &cli.out {
        persist_run(&report, &rows, dir)?;
        writeln!(out, "wrote evaluation to {}", dir.join(REPORT_FILE).display())?;
    }
    Ok(())
}

/// Runs a command in-process and captures stdout, for tests.
pub fn run_captured<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => return (if e.use_stderr() { 2 } else { 0 }, e.to_string()),
    };
    let mut buf = Vec::new();
    let code = match execute(&cli, &mut buf) {
        Ok(()) => 0,
        Err(e) => {
            buf.extend_from_slice(format!("error: {}\n", one_line(&e)).as_bytes());
            1
        }
    };
    (code, String::from_utf8_lossy(&buf).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_global_flags_anywhere() {
        let cli = Cli::try_parse_from([
            "clickspoil",
            "spoil",
            "--gold-tags",
            "--mode",
            "fallback",
            "--bleu-aggregation",
            "both",
            "--seed",
            "3",
        ])
        .unwrap();
        assert_eq!(cli.mode, Some(SpoilMode::Fallback));
        assert_eq!(cli.bleu_aggregation, Some(BleuReporting::Both));
        assert_eq!(cli.seed, Some(3));
    }

    #[test]
    fn unknown_flags_and_subcommands_fail() {
        assert_eq!(run_captured(["clickspoil", "frobnicate"]).0, 2);
        assert_eq!(run_captured(["clickspoil", "validate", "--nope"]).0, 2);
        assert_eq!(run_captured(["clickspoil", "validate", "--mode", "sideways"]).0, 2);
    }

    #[test]
    fn config_errors_come_first() {
        let (code, msg) = run_captured(["clickspoil", "classify", "--config", "/no/such/config.toml"]);
        assert_eq!(code, 1);
        assert!(msg.contains("cannot read config"), "{msg}");
    }
}
