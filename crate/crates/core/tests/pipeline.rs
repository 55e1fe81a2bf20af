mod common;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use common::ScriptedTransport;
use guided_clustering::corpus::save_embedding_set;
use guided_clustering::granularity::GranularityConfig;
use guided_clustering::oracle::{JudgeConfig, JudgeKind};
use guided_clustering::pipeline::{report, run_pipeline, ClusterConfig, ClusterMethod, HierarchyConfig, Manifest, RunConfig, RunOptions, MANIFEST};
use guided_clustering::sampler::SamplerConfig;
use guided_clustering::synth::{gaussian_mixture, MixtureSpec};
use guided_clustering::Error;

fn small_config(root: &Path, labels: bool) -> RunConfig {
    let set = gaussian_mixture(&MixtureSpec {
        n: 400,
        k: 5,
        d: 8,
        ..Default::default()
    })
    .unwrap();
    let set = if labels { set } else { set.without_labels() };
    let input = root.join("input");
    save_embedding_set(&set, &input).unwrap();
    let mut cfg = RunConfig {
        embeddings: input,
        workdir: root.join("run"),
        iterations: 2,
        cluster: ClusterConfig {
            method: ClusterMethod::MinibatchKmeans,
            k: 15,
            ..Default::default()
        },
        sampler: SamplerConfig {
            budget: 120,
            ..Default::default()
        },
        hierarchy: HierarchyConfig {
            k_start: Some(30),
            standardize: false,
        },
        granularity: Some(GranularityConfig {
            k_min: 2,
            k_max: 20,
            lambda: 2,
            ..Default::default()
        }),
        ..Default::default()
    };
    cfg.evaluation.seeds = vec![0, 1];
    cfg.train.epochs = 3;
    cfg
}

fn stage_names(m: &Manifest) -> Vec<String> {
    m.stages
        .iter()
        .map(|s| match s.iteration {
            Some(i) => format!("{}#{i}", s.stage),
            None => s.stage.clone(),
        })
        .collect()
}

#[test]
fn full_run_writes_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), true);
    let m = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert!(m.complete);
    assert_eq!(
        stage_names(&m),
        [
            "ingest", "cluster#1", "sample#1", "judge#1", "finetune#1", "apply#1", "cluster#2", "sample#2", "judge#2", "finetune#2",
            "apply#2", "hierarchy", "granularity", "evaluate"
        ]
    );
    assert!(m.skipped.is_empty());
    for s in &m.stages {
        for path in s.artifacts.keys() {
            assert!(cfg.workdir.join(path).exists(), "{path}");
        }
    }
    assert_eq!(m.judge_stats.queries, 240 + m.stage("granularity", None).unwrap().stats["pairs"].as_u64().unwrap() as usize);
    let text = report(&cfg.workdir).unwrap();
    assert!(text.contains("run complete"));
    assert!(text.contains("refined #2"));
    assert!(text.contains("granularity error"));
    assert!(!text.contains("skipped"));
}

#[test]
fn resume_reuses_stages_and_recomputes_missing_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), true);
    run_pipeline(&cfg, &RunOptions::default()).unwrap();
    let first = fs::read(cfg.workdir.join(MANIFEST)).unwrap();
    let resume = RunOptions {
        resume: true,
        ..Default::default()
    };
    run_pipeline(&cfg, &resume).unwrap();
    assert_eq!(first, fs::read(cfg.workdir.join(MANIFEST)).unwrap());

    // losing a mid-run artifact recomputes from that stage onward, identically
    fs::remove_file(cfg.workdir.join("iter-2/triplets.jsonl")).unwrap();
    run_pipeline(&cfg, &resume).unwrap();
    assert_eq!(first, fs::read(cfg.workdir.join(MANIFEST)).unwrap());
}

#[test]
fn interrupted_run_leaves_a_partial_manifest_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), true);
    // replay without a recorded cache fails at the first judging stage
    cfg.judge = JudgeConfig {
        kind: JudgeKind::Replay,
        cache_path: Some(tmp.path().join("empty.jsonl")),
        ..Default::default()
    };
    let err = run_pipeline(&cfg, &RunOptions::default()).unwrap_err();
    match err {
        Error::Stage { stage, source, .. } => {
            assert_eq!(stage, "judge");
            assert!(matches!(*source, Error::Judge(_)));
        }
        other => panic!("unexpected error {other}"),
    }
    let m = Manifest::load(&cfg.workdir).unwrap();
    assert!(!m.complete);
    assert_eq!(stage_names(&m), ["ingest", "cluster#1", "sample#1"]);
    let text = report(&cfg.workdir).unwrap();
    assert!(text.contains("run incomplete"));
    assert!(text.contains("skipped"));
}

#[test]
fn label_free_corpus_runs_with_a_text_judge() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), false);
    cfg.judge.kind = JudgeKind::Remote;
    let transport = Arc::new(ScriptedTransport::new());
    let opts = RunOptions {
        transport: Some(transport.clone()),
        ..Default::default()
    };
    let m = run_pipeline(&cfg, &opts).unwrap();
    assert!(m.complete);
    assert_eq!(m.skipped, ["evaluate"]);
    assert!(transport.calls() > 0);
    assert!(report(&cfg.workdir).unwrap().contains("evaluation\n  skipped"));
}

#[test]
fn replayed_runs_are_byte_identical_without_remote_calls() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), true);
    let cache = tmp.path().join("cache.jsonl");
    cfg.judge = JudgeConfig {
        kind: JudgeKind::Remote,
        cache_path: Some(cache.clone()),
        ..Default::default()
    };
    let transport = Arc::new(ScriptedTransport::new());
    let opts = RunOptions {
        transport: Some(transport.clone()),
        ..Default::default()
    };
    run_pipeline(&cfg, &opts).unwrap();
    let recorded = transport.calls();
    assert!(recorded > 0);

    // the same remote run again is served entirely from the cache
    cfg.workdir = tmp.path().join("again");
    let m = run_pipeline(&cfg, &opts).unwrap();
    assert_eq!(transport.calls(), recorded);
    assert_eq!(m.judge_stats.remote_calls, 0);

    cfg.judge.kind = JudgeKind::Replay;
    let mut manifests = Vec::new();
    for name in ["replay-a", "replay-b"] {
        cfg.workdir = tmp.path().join(name);
        run_pipeline(&cfg, &RunOptions::default()).unwrap();
        manifests.push(fs::read(cfg.workdir.join(MANIFEST)).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    assert_eq!(transport.calls(), recorded);
}

#[test]
fn unreachable_judge_is_a_transport_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), true);
    cfg.judge.kind = JudgeKind::Remote;
    cfg.judge.max_retries = 1;
    cfg.judge.backoff_base_ms = 1;
    let transport = Arc::new(ScriptedTransport {
        fail: true,
        ..Default::default()
    });
    let opts = RunOptions {
        transport: Some(transport),
        ..Default::default()
    };
    match run_pipeline(&cfg, &opts).unwrap_err() {
        Error::Stage { stage, source, .. } => {
            assert_eq!(stage, "judge");
            assert!(matches!(*source, Error::Transport(_)));
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn seeds_change_only_seeded_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), true);
    cfg.granularity = None;
    let a = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    cfg.workdir = tmp.path().join("other");
    cfg.seed = 7;
    let b = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(a.input_sha256, b.input_sha256);
    assert_ne!(a.config_sha256, b.config_sha256);
    assert_eq!(a.stages[0], b.stages[0]);
    assert_ne!(a.stage("cluster", Some(1)), b.stage("cluster", Some(1)));
    assert_eq!(a.skipped, ["hierarchy", "granularity"]);
}

#[test]
fn fingerprint_ignores_paths() {
    let a = RunConfig {
        embeddings: "x".into(),
        ..Default::default()
    };
    let b = RunConfig {
        embeddings: "y".into(),
        workdir: "elsewhere".into(),
        ..Default::default()
    };
    assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
    let c = RunConfig { seed: 1, ..a.clone() };
    assert_ne!(a.fingerprint().unwrap(), c.fingerprint().unwrap());
}

#[test]
fn default_budget_cost() {
    let c = RunConfig::default().cost_estimate();
    assert_eq!(c.queries, 1024 + 198);
    assert!((c.dollars - (0.26624 + 198.0 * 0.25 * 0.002)).abs() < 1e-9);
}

#[test]
fn config_rejects_unknown_fields() {
    let err = serde_json::from_str::<RunConfig>(r#"{"embeddings": "x", "iteration": 2}"#);
    assert!(err.is_err());
    let ok: RunConfig = serde_json::from_str(r#"{"embeddings": "x", "judge": {"kind": "gt"}}"#).unwrap();
    assert_eq!(ok.iterations, 1);
    assert!(ok.validate().is_ok());
}
