use std::path::Path;
use std::process::{Command, Output};

use langtransfer::experiment::{ExperimentConfig, RunManifest, RunStatus};
use langtransfer::langgen::{validate, Corpus};

const TINY_RUN: &str = include_str!("data/tiny_run.toml");

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langtransfer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_and_validation_errors_exit_with_one() {
    assert_eq!(cli(&["langgen"]).status.code(), Some(1));
    assert_eq!(cli(&["no-such-command"]).status.code(), Some(1));
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("x.synl");
    let odd = cli(&["langgen", "--kind", "nested", "--seq-len", "7", "--out", s(&out)]);
    assert_eq!(odd.status.code(), Some(1));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["report", s(&d.path().join("missing"))]).status.code(), Some(2));
    let bad = d.path().join("bad.synl");
    std::fs::write(&bad, b"not a corpus").unwrap();
    let out = d.path().join("ckpt");
    assert_ne!(cli(&["train", "--corpus", s(&bad), "--out", s(&out)]).status.code(), Some(0));
}

#[test]
fn langgen_writes_valid_identical_corpora() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a.synl"), d.path().join("b.synl"));
    for p in [&a, &b] {
        ok(&["langgen", "--kind", "flat", "--n-sequences", "50", "--seq-len", "64", "--seed", "3", "--out", s(p)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = Corpus::read(&a).unwrap();
    assert_eq!(c.n_sequences(), 50);
    assert!(c.sequences().all(|q| validate(&c.spec, q).is_valid(c.spec.kind)));
}

#[test]
fn text_pipeline_from_vocabulary_to_cloze() {
    let d = tempfile::tempdir().unwrap();
    let p = |n: &str| d.path().join(n);
    let text = p("text.txt");
    std::fs::write(&text, langtransfer::textcorpus::template_english(1500, 1)).unwrap();
    ok(&["corpus", "build-vocab", "--text", s(&text), "--max-vocab", "300", "--out", s(&p("vocab.txt"))]);
    ok(&[
        "corpus", "encode", "--text", s(&text), "--vocab", s(&p("vocab.txt")), "--seq-len", "32", "--out",
        s(&p("en.synl")),
    ]);
    let tags = p("tags.tsv");
    std::fs::write(&tags, " dog\tnoun\t1\n cat\tnoun\t1\n").unwrap();
    ok(&[
        "corpus", "features", "--corpus", s(&p("en.synl")), "--vocab", s(&p("vocab.txt")), "--tags", s(&tags),
        "--min-occurrences", "1", "--out", s(&p("features.json")),
    ]);
    let table = langtransfer::textcorpus::FeatureTable::read(p("features.json")).unwrap();
    assert!(table.external.contains_key("noun"));

    ok(&["langgen", "--kind", "nested", "--n-sequences", "40", "--seq-len", "32", "--out", s(&p("nested.synl"))]);
    ok(&["train", "--corpus", s(&p("nested.synl")), "--steps", "5", "--out", s(&p("nested"))]);
    ok(&[
        "train", "--corpus", s(&p("en.synl")), "--from", s(&p("nested")), "--steps", "3", "--modes", "E,EL", "--out",
        s(&p("ft")),
    ]);
    assert!(p("ft/EL/model.json").exists());
    ok(&[
        "probes", "--ckpt", s(&p("ft/E")), "--features", s(&p("features.json")), "--out", s(&p("probes.csv")),
    ]);
    assert!(std::fs::read_to_string(p("probes.csv")).unwrap().starts_with("feature,metric,value"));
    ok(&["embedx", "--ckpt", &format!("e={}", s(&p("ft/E"))), "--k", "1,2,4", "--drop-special", "--out", s(&p("emb"))]);
    assert!(p("emb/spectra.png").exists());
    ok(&["cloze", "eval", "--ckpt", s(&p("ft/EL")), "--vocab", s(&p("vocab.txt")), "--out", s(&p("cloze"))]);
    let table = std::fs::read_to_string(p("cloze/cloze.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 12 + 1);
}

#[test]
fn runs_replay_bit_identically_and_refuse_reuse() {
    let d = tempfile::tempdir().unwrap();
    let config = d.path().join("tiny.toml");
    std::fs::write(&config, TINY_RUN).unwrap();
    ExperimentConfig::load(&config).unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["run", "--config", s(&config), "--out", s(&a)]);
    ok(&["run", "--replay", s(&a), "--out", s(&b)]);
    let (ma, mb) = (RunManifest::read(&a).unwrap(), RunManifest::read(&b).unwrap());
    assert_eq!(ma.status, RunStatus::Complete);
    assert_eq!(ma.outputs, mb.outputs);
    assert!(ma.outputs.keys().any(|k| k.starts_with("checkpoints/")));
    assert!(ma.outputs.contains_key("transfer.json"));

    let text = ok(&["report", s(&a)]);
    for section in ["Transfer", "Cloze", "Probes", "Embeddings"] {
        assert!(text.contains(&format!("== {section}")), "{section} missing from\n{text}");
    }
    assert_eq!(cli(&["run", "--config", s(&config), "--out", s(&a)]).status.code(), Some(1));
}
