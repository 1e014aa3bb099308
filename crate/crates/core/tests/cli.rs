use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use biset_core::pipeline::synthetic::toy_overfit_corpus;
use tempfile::{tempdir, TempDir};

fn biset(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biset"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// Writes the toy corpus and a fast config into a fresh directory.
fn workspace() -> TempDir {
    let dir = tempdir().unwrap();
    let pairs = toy_overfit_corpus();
    let lines = |f: fn(&biset_core::retrieval::ArticleSummaryPair) -> String| {
        pairs.iter().map(f).collect::<Vec<_>>().join("\n") + "\n"
    };
    fs::write(dir.path().join("train.src"), lines(|p| p.article.join(" "))).unwrap();
    fs::write(dir.path().join("train.tgt"), lines(|p| p.summary.join(" "))).unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "// fast settings\n\
         retrieval.n = 5\n\
         rerank.emb_dim = 8\nrerank.hidden = 8\nrerank.steps = 10\n\
         biset.emb_dim = 8\nbiset.hidden = 8\nbiset.steps = 10\nbiset.max_decode_len = 6\n\
         paths.train_articles = train.src\npaths.train_summaries = train.tgt\n\
         paths.test_articles = train.src\npaths.test_summaries = train.tgt\n\
         paths.dev_articles = train.src\npaths.dev_summaries = train.tgt\n",
    )
    .unwrap();
    dir
}

fn trained() -> TempDir {
    let dir = workspace();
    let d = dir.path();
    ok(&biset(d, &["--config", "run.cfg", "build-index"]));
    ok(&biset(d, &["--config", "run.cfg", "train-rerank"]));
    ok(&biset(d, &["--config", "run.cfg", "train-biset"]));
    dir
}

#[test]
fn end_to_end_runs_are_byte_identical() {
    let dir = trained();
    let d = dir.path();
    for f in ["artifacts/index.bin", "artifacts/rerank.ckpt", "artifacts/biset.ckpt", "artifacts/biset.ckpt.meta"] {
        assert!(d.join(f).exists(), "{f}");
    }

    let s1 = ok(&biset(d, &["--config", "run.cfg", "summarize", "--articles", "train.src"]));
    let s2 = ok(&biset(d, &["--config", "run.cfg", "summarize", "--articles", "train.src"]));
    assert_eq!(s1, s2);
    assert_eq!(s1.lines().count(), toy_overfit_corpus().len());

    let e1 = ok(&biset(d, &["--config", "run.cfg", "evaluate"]));
    let e2 = ok(&biset(d, &["--config", "run.cfg", "evaluate"]));
    assert_eq!(e1, e2);
    assert!(e1.contains("config_hash="));
    assert!(e1.contains("ROUGE") || e1.contains("rouge"));

    // retraining from scratch reproduces the checkpoint
    let before = fs::read(d.join("artifacts/biset.ckpt")).unwrap();
    ok(&biset(d, &["--config", "run.cfg", "train-biset", "--out", "again.ckpt"]));
    assert_eq!(before, fs::read(d.join("again.ckpt")).unwrap());
}

#[test]
fn template_commands() {
    let dir = trained();
    let d = dir.path();
    let r = ok(&biset(d, &["--config", "run.cfg", "retrieve", "--articles", "train.src", "--n", "3"]));
    assert!(r.lines().all(|l| l.starts_with("query=") && l.contains(" template=")));
    assert!(r.lines().count() <= 3 * toy_overfit_corpus().len());

    let t = ok(&biset(d, &["--config", "run.cfg", "make-templates", "--mode", "retrieve_top", "--exclude-self"]));
    assert_eq!(t.lines().count(), toy_overfit_corpus().len());
    ok(&biset(d, &["--config", "run.cfg", "make-templates", "--mode", "reranked", "--out", "t.txt"]));
    let s = ok(&biset(d, &["--config", "run.cfg", "summarize", "--articles", "train.src", "--templates", "t.txt"]));
    assert_eq!(s.lines().count(), toy_overfit_corpus().len());

    let sweep = ok(&biset(d, &["--config", "run.cfg", "sweep-templates", "--ns", "1,3", "--exclude-self"]));
    assert!(sweep.contains("N-Optimal(3)"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = workspace();
    let d = dir.path();
    assert_eq!(code(&biset(d, &["train-rerank"])), 2);
    assert_eq!(code(&biset(d, &["--profile", "huge", "build-index"])), 2);
    fs::write(d.join("bad.cfg"), "biset.hiden = 3\n").unwrap();
    let out = biset(d, &["--config", "bad.cfg", "build-index"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("biset.hiden"));
    assert_eq!(code(&biset(d, &["--config", "run.cfg", "make-templates", "--mode", "n_optimal:x"])), 2);
    assert_eq!(code(&biset(d, &["no-such-command"])), 2);
}

#[test]
fn bad_data_exits_3() {
    let dir = workspace();
    let d = dir.path();
    fs::write(d.join("short.tgt"), "one line\n").unwrap();
    let out = biset(d, &["--config", "run.cfg", "build-index", "--summaries", "short.tgt"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("short.tgt") || String::from_utf8_lossy(&out.stderr).contains('1'));
}

#[test]
fn missing_artifacts_exit_4() {
    let dir = workspace();
    let d = dir.path();
    let out = biset(d, &["--config", "run.cfg", "summarize", "--articles", "train.src"]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("index.bin"));
    assert_eq!(code(&biset(d, &["--config", "missing.cfg", "build-index"])), 4);
    assert_eq!(code(&biset(d, &["--config", "run.cfg", "build-index", "--articles", "nope.src"])), 4);
}
