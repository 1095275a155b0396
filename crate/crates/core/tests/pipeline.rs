mod common;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::Ordering;

use clickspoil::corpus::{load_corpus, SpoilerTag};
use clickspoil::pipeline::cache::completion_key;
use clickspoil::pipeline::cli::run_captured;
use clickspoil::pipeline::mock::{prompt_target_title, MockBehavior, MockServer};
use clickspoil::pipeline::persist::{load_predictions, load_report, predictions_jsonl};
use clickspoil::pipeline::report::{PredictionRow, RowScores};
use clickspoil::spoiler::Method;
use clickspoil::synth::{separable_corpus, verbatim_corpus};
use common::exemplar_fixture_path;

fn run(args: &[&str]) -> String {
    let mut full = vec!["clickspoil"];
    full.extend_from_slice(args);
    let (code, out) = run_captured(full);
    assert_eq!(code, 0, "{args:?} failed:\n{out}");
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> PathBuf {
    exemplar_fixture_path()
}

#[test]
fn validate_reports_tag_counts() {
    let out = run(&["validate", "--corpus", s(&fixture())]);
    assert!(out.contains("3 records, 0 unlabeled, 0 violations"), "{out}");
    for tag in ["phrase", "passage", "multi"] {
        assert!(out.contains(&format!("{tag}: 1 (33.3%)")), "{out}");
    }
    let json = run(&["validate", "--json", "--corpus", s(&fixture())]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["record_count"], 3);
}

#[test]
fn remote_perfect_scorers_classify_perfectly() {
    let corpus = load_corpus(fixture(), "fixture", true).unwrap();
    let mut table = HashMap::new();
    for r in &corpus.records {
        let tag = r.tag.unwrap();
        let m1 = if tag == SpoilerTag::Multi { 0.95 } else { 0.05 };
        let m2 = if tag == SpoilerTag::Passage { 0.9 } else { 0.1 };
        table.insert(("multi-vs-rest".to_string(), r.title.clone()), m1);
        table.insert(("passage-vs-phrase".to_string(), r.title.clone()), m2);
    }
    let server = MockServer::start(MockBehavior::score_table(table, 0.5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run(&[
        "classify",
        "--classifier",
        "remote",
        "--backend-url",
        &server.url(),
        "--corpus",
        s(&fixture()),
        "--out",
        s(dir.path()),
    ]);
    let report = load_report(dir.path()).unwrap();
    let t1 = report.task1.unwrap();
    assert_eq!(t1.cascade_balanced_accuracy, 1.0);
    assert_eq!(t1.model1_balanced_accuracy, 1.0);
    assert_eq!(t1.model2_balanced_accuracy, 1.0);
    let rows = load_predictions(dir.path()).unwrap();
    for r in &rows {
        assert_eq!(Some(r.predicted_tag), corpus.get(&r.id).unwrap().tag);
    }
}

#[test]
fn gold_predictions_score_perfect_bleu() {
    let corpus = load_corpus(fixture(), "fixture", true).unwrap();
    let rows: Vec<PredictionRow> = corpus
        .records
        .iter()
        .map(|r| PredictionRow {
            id: r.id.clone(),
            predicted_tag: r.tag.unwrap(),
            spoiler_texts: r.spoilers.clone(),
            method: None,
            scores: RowScores::default(),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("gold.jsonl");
    std::fs::write(&file, predictions_jsonl(&rows)).unwrap();
    let out = run(&[
        "evaluate",
        "--predictions",
        s(&file),
        "--corpus",
        s(&fixture()),
        "--bleu-aggregation",
        "both",
        "--out",
        s(&dir.path().join("eval")),
    ]);
    assert!(out.contains("Task 1: not evaluated"), "{out}");
    let report = load_report(dir.path().join("eval")).unwrap();
    let t2 = report.task2.unwrap();
    assert_eq!(t2.overall.sentence_mean, Some(1.0));
    assert_eq!(t2.overall.pooled, Some(1.0));
}

#[test]
fn persisted_runs_reevaluate_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    run(&[
        "spoil",
        "--train",
        s(&fixture()),
        "--corpus",
        s(&fixture()),
        "--out",
        s(&run_dir),
    ]);
    let out = run(&["evaluate", "--predictions", s(&run_dir), "--corpus", s(&fixture())]);
    let line = out.lines().find(|l| l.contains("persisted report reproduced")).expect(&out);
    let diff: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(diff <= 1e-12, "{line}");

    let rendered = run(&["report", s(&run_dir)]);
    assert!(rendered.contains("Task 2"), "{rendered}");

    let preds = run_dir.join("predictions.jsonl");
    let text = std::fs::read_to_string(&preds).unwrap();
    std::fs::write(&preds, text.replacen("\"phrase\"", "\"multi\"", 1).replacen("\"passage\"", "\"multi\"", 1))
        .unwrap();
    let (code, msg) = run_captured(["clickspoil", "evaluate", "--predictions", s(&run_dir), "--corpus", s(&fixture())]);
    assert_eq!(code, 1);
    assert!(msg.contains("digest"), "{msg}");
}

#[test]
fn default_spoil_uses_predicted_tags() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sep.jsonl");
    std::fs::write(&data, separable_corpus(80, 2).to_jsonl()).unwrap();
    let classify_dir = dir.path().join("classify");
    let spoil_dir = dir.path().join("spoil");
    let common = ["--train", s(&data), "--corpus", s(&data)];
    run(&[&["classify"][..], &common, &["--out", s(&classify_dir)]].concat());
    run(&[&["spoil"][..], &common, &["--out", s(&spoil_dir)]].concat());
    let classified = load_predictions(&classify_dir).unwrap();
    let spoiled = load_predictions(&spoil_dir).unwrap();
    assert_eq!(classified.len(), spoiled.len());
    for (c, p) in classified.iter().zip(&spoiled) {
        assert_eq!(c.id, p.id);
        assert_eq!(c.predicted_tag, p.predicted_tag);
        assert!(!p.spoiler_texts.is_empty());
    }
    // given predictions are honored, too
    let given_dir = dir.path().join("given");
    run(&["spoil", "--corpus", s(&data), "--predictions", s(&classify_dir), "--out", s(&given_dir)]);
    assert_eq!(
        std::fs::read(spoil_dir.join("predictions.jsonl")).unwrap(),
        std::fs::read(given_dir.join("predictions.jsonl")).unwrap()
    );
}

fn classify_and_spoil(data: &Path, train: &Path, out: &Path) -> (Vec<u8>, Vec<u8>) {
    let c = out.join("classify");
    let sp = out.join("spoil");
    let base = ["--seed", "7", "--mode", "extractive", "--train", s(train), "--corpus", s(data)];
    run(&[&["classify"][..], &base, &["--out", s(&c)]].concat());
    run(&[&["spoil"][..], &base, &["--out", s(&sp)]].concat());
    (
        std::fs::read(c.join("predictions.jsonl")).unwrap(),
        std::fs::read(sp.join("predictions.jsonl")).unwrap(),
    )
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let synth = dir.path().join("synth.jsonl");
    std::fs::write(&synth, separable_corpus(200, 0).to_jsonl()).unwrap();
    for data in [fixture(), synth] {
        let a = classify_and_spoil(&data, &data, &dir.path().join("a"));
        let b = classify_and_spoil(&data, &data, &dir.path().join("b"));
        assert_eq!(a, b, "{}", data.display());
    }
}

fn write_generative_config(dir: &Path, url: &str, max_tokens: u32) -> PathBuf {
    let cfg = dir.join(format!("gen-{max_tokens}.toml"));
    std::fs::write(
        &cfg,
        format!(
            "seed = 1\n\n[spoiling]\nmode = \"generative\"\nmax_output_tokens = {max_tokens}\n\n\
             [backend]\nbase_url = \"{url}\"\nbackoff_ms = 5\ncache_dir = \"cache\"\n"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn completions_are_cached() {
    let server = MockServer::start(MockBehavior::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("verbatim.jsonl");
    let corpus = verbatim_corpus(6, 1);
    std::fs::write(&data, corpus.to_jsonl()).unwrap();
    let cfg = write_generative_config(dir.path(), &server.url(), 64);
    let spoil = |cfg: &Path, out: &str| {
        run(&[
            "spoil",
            "--gold-tags",
            "--config",
            s(cfg),
            "--corpus",
            s(&data),
            "--out",
            s(&dir.path().join(out)),
        ])
    };
    let calls = || server.counters().complete_calls.load(Ordering::SeqCst);

    spoil(&cfg, "first");
    assert_eq!(calls(), 6);
    spoil(&cfg, "second");
    assert_eq!(calls(), 6, "identical rerun must not reach the backend");
    assert_eq!(
        std::fs::read(dir.path().join("first/predictions.jsonl")).unwrap(),
        std::fs::read(dir.path().join("second/predictions.jsonl")).unwrap()
    );
    for r in load_predictions(dir.path().join("first")).unwrap() {
        assert_eq!(r.method, Some(Method::Generative));
        assert_eq!(r.spoiler_texts.join(", "), corpus.get(&r.id).unwrap().title);
    }

    // a different max_tokens is a different key
    spoil(&write_generative_config(dir.path(), &server.url(), 32), "third");
    assert_eq!(calls(), 12);

    // corrupted entries are refetched and fresh entries appended beside them
    let cache = dir.path().join("cache");
    let originals: Vec<PathBuf> = std::fs::read_dir(&cache)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.file_stem().unwrap().to_str().unwrap().contains('.'))
        .collect();
    assert_eq!(originals.len(), 12);
    for p in &originals {
        std::fs::write(p, "{ not json").unwrap();
    }
    spoil(&cfg, "fourth");
    assert_eq!(calls(), 18);
    let appended = originals
        .iter()
        .filter(|p| p.with_extension("1.json").exists())
        .count();
    assert_eq!(appended, 6);
    assert!(originals.iter().all(|p| std::fs::read_to_string(p).unwrap() == "{ not json"));
    assert_eq!(
        std::fs::read(dir.path().join("first/predictions.jsonl")).unwrap(),
        std::fs::read(dir.path().join("fourth/predictions.jsonl")).unwrap()
    );
}

#[test]
fn cache_keys_cover_prompt_and_length() {
    assert_ne!(completion_key("p", 1), completion_key("p", 2));
    assert_ne!(completion_key("p", 1), completion_key("q", 1));
    assert_eq!(completion_key("p", 1), completion_key("p", 1));
    assert_eq!(prompt_target_title("x\n\nTitle: A\n\nTitle: B c\n\nSpoiler:"), "B c");
}

#[test]
fn generative_without_backend_falls_back_when_asked() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let url = format!("http://127.0.0.1:{port}");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("fast.toml");
    std::fs::write(&cfg_path, "[backend]\nretries = 1\nbackoff_ms = 1\n").unwrap();
    let data = dir.path().join("verbatim.jsonl");
    std::fs::write(&data, verbatim_corpus(6, 2).to_jsonl()).unwrap();
    let base = ["spoil", "--gold-tags", "--corpus", s(&data), "--backend-url", &url, "--config", s(&cfg_path)];
    let (code, msg) = run_captured([&["clickspoil"][..], &base, &["--mode", "generative"]].concat());
    assert_eq!(code, 1);
    assert!(msg.contains("connection refused"), "{msg}");
    let out = dir.path().join("fb");
    run(&[&base[..], &["--mode", "fallback", "--out", s(&out)]].concat());
    let rows = load_predictions(&out).unwrap();
    assert!(rows.iter().all(|r| r.method == Some(Method::Extractive)));
}

#[test]
fn sweep_writes_ranked_results() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sep.jsonl");
    std::fs::write(&data, separable_corpus(200, 0).to_jsonl()).unwrap();
    let out = run(&["sweep", "--corpus", s(&data), "--trials", "4", "--seed", "3", "--out", s(dir.path())]);
    assert!(out.contains("sweep multi-vs-rest: 4 trials, seed 3"), "{out}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 4);
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_clickspoil");
    let ok = Command::new(exe).args(["synth", "--kind", "verbatim", "--count", "4"]).output().unwrap();
    assert!(ok.status.success());
    assert_eq!(String::from_utf8(ok.stdout).unwrap().lines().count(), 4);

    let missing = Command::new(exe)
        .args(["validate", "--corpus", "/definitely/not/here.jsonl"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let err = String::from_utf8(missing.stderr).unwrap();
    assert!(err.starts_with("error: ") && err.trim_end().lines().count() == 1, "{err}");

    let usage = Command::new(exe).arg("nonsense").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}
