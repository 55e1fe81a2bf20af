use std::path::Path;
use std::process::{Command, Output};

use guided_clustering::corpus::{load_embedding_set, save_embedding_set};
use guided_clustering::synth::{gaussian_mixture, MixtureSpec};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_guided-clustering"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_corpus(dir: &Path) {
    let set = gaussian_mixture(&MixtureSpec {
        n: 300,
        k: 4,
        d: 6,
        ..Default::default()
    })
    .unwrap();
    save_embedding_set(&set, dir.join("raw")).unwrap();
}

#[test]
fn subcommands_chain_into_a_full_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_corpus(d);
    assert_eq!(ok(d, &["ingest", "--input", "raw", "--out", "base", "--standardize"]).trim(), "300 x 6");
    ok(d, &["cluster", "--input", "base", "--k", "12", "--seed", "1", "--out", "clusters.json"]);
    let sampled = ok(d, &["sample", "--input", "base", "--clusters", "clusters.json", "--budget", "80", "--out", "t.jsonl"]);
    assert!(sampled.starts_with("80 triplets"), "{sampled}");
    let cost = ok(d, &["judge", "--input", "base", "--triplets", "t.jsonl", "--dry-run", "--out", "unused"]);
    assert!(cost.starts_with("80 queries"), "{cost}");
    assert!(!d.join("unused").exists());
    ok(d, &["judge", "--input", "base", "--triplets", "t.jsonl", "--kind", "gt", "--out", "j.jsonl"]);
    ok(d, &["finetune", "--input", "base", "--judgments", "j.jsonl", "--epochs", "2", "--out", "adapter"]);
    ok(d, &["finetune", "--input", "base", "--judgments", "j.jsonl", "--epochs", "1", "--init", "adapter", "--out", "adapter2"]);
    ok(d, &["apply", "--input", "base", "--adapter", "adapter2", "--out", "refined"]);
    assert_eq!(load_embedding_set(d.join("refined")).unwrap().n(), 300);
    let h = ok(d, &["hierarchy", "--input", "refined", "--k-start", "40", "--out", "h.json"]);
    assert!(h.starts_with("40 leaves, 39 merges"), "{h}");
    let g = ok(
        d,
        &[
            "granularity", "--input", "refined", "--hierarchy", "h.json", "--k-max", "20", "--lambda", "3", "--kind", "gt",
            "--baselines", "silhouette,elbow", "--pairs-out", "p.jsonl", "--out", "g.json",
        ],
    );
    assert!(g.contains("k* = ") && g.contains("silhouette: ") && g.contains("elbow: "), "{g}");
    assert!(d.join("p.jsonl").exists());
    let e = ok(d, &["evaluate", "--input", "refined", "--seeds", "0,1", "--judgments", "j.jsonl"]);
    assert!(e.contains("kmeans") && e.contains("triplet accuracy: judge Some(1.0)"), "{e}");
}

#[test]
fn run_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_corpus(d);
    let config = r#"{
        "embeddings": "raw",
        "workdir": "run",
        "cluster": {"k": 10},
        "sampler": {"budget": 60},
        "train": {"epochs": 2},
        "hierarchy": {"k_start": 30},
        "granularity": {"k_max": 20},
        "evaluation": {"seeds": [0]}
    }"#;
    std::fs::write(d.join("run.json"), config).unwrap();
    let dry = ok(d, &["run", "--config", "run.json", "--dry-run"]);
    assert!(dry.starts_with("78 queries"), "{dry}");
    assert!(!d.join("run").exists());
    let out = ok(d, &["run", "--config", "run.json"]);
    assert!(out.contains("run complete"));
    assert_eq!(ok(d, &["report", "--workdir", "run"]), out);
    let again = ok(d, &["run", "--config", "run.json", "--resume"]);
    assert_eq!(again, out);
}

#[test]
fn bad_config_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.json"), r#"{"embeddings": "x", "iteration": 3}"#).unwrap();
    let out = cli(d, &["run", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iteration"));
    assert_eq!(cli(d, &["cluster", "--bogus"]).status.code(), Some(2));
    assert_eq!(cli(d, &["run", "--config", "missing.json"]).status.code(), Some(2));
}

#[test]
fn missing_input_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(tmp.path(), &["ingest", "--input", "nothing", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unreachable_endpoint_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_corpus(d);
    let judge = r#"{"kind": "remote", "endpoint": "http://127.0.0.1:9/v1/chat/completions", "max_retries": 0}"#;
    std::fs::write(d.join("judge.json"), judge).unwrap();
    ok(d, &["sample", "--input", "raw", "--clusters", "none", "--random", "--budget", "5", "--out", "t.jsonl"]);
    let out = cli(d, &["judge", "--input", "raw", "--triplets", "t.jsonl", "--judge-config", "judge.json", "--out", "j.jsonl"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    let config = format!(r#"{{"embeddings": "raw", "workdir": "run", "cluster": {{"k": 8}}, "sampler": {{"budget": 5}}, "judge": {judge}}}"#);
    std::fs::write(d.join("run.json"), config).unwrap();
    let out = cli(d, &["run", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("judge"));
}
