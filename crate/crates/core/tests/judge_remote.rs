mod common;

use std::sync::Arc;
use std::time::Duration;

use common::ScriptedTransport;
use guided_clustering::corpus::EmbeddingSet;
use guided_clustering::eval::ground_truth_positive;
use guided_clustering::oracle::{Judge, JudgeConfig, JudgeKind, PairVerdict, PromptSpec, TripletVerdict};
use guided_clustering::sampler::{sample_random_triplets, Triplet};
use guided_clustering::synth::{gaussian_mixture, MixtureSpec};

fn corpus() -> EmbeddingSet {
    gaussian_mixture(&MixtureSpec {
        n: 600,
        k: 6,
        d: 4,
        ..Default::default()
    })
    .unwrap()
}

fn triplets(set: &EmbeddingSet, budget: usize) -> Vec<Triplet> {
    sample_random_triplets(set, budget, 11).unwrap().triplets
}

fn remote(cfg: JudgeConfig, transport: &Arc<ScriptedTransport>) -> Judge {
    Judge::with_transport(
        JudgeConfig {
            kind: JudgeKind::Remote,
            ..cfg
        },
        transport.clone(),
    )
    .unwrap()
}

#[test]
fn noise_free_noisy_judge_equals_ground_truth() {
    let set = corpus();
    let ts = triplets(&set, 1000);
    let spec = PromptSpec::default();
    let gt = Judge::new(JudgeConfig::default()).unwrap().judge_triplets(&spec, &ts, &set).unwrap();
    let noisy = Judge::new(JudgeConfig {
        kind: JudgeKind::Noisy,
        flip_probability: 0.0,
        ..Default::default()
    })
    .unwrap()
    .judge_triplets(&spec, &ts, &set)
    .unwrap();
    let a: Vec<TripletVerdict> = gt.judgments.iter().map(|j| j.verdict).collect();
    let b: Vec<TripletVerdict> = noisy.judgments.iter().map(|j| j.verdict).collect();
    assert_eq!(a, b);
}

#[test]
fn text_answers_agree_with_labels() {
    let set = corpus();
    let ts = triplets(&set, 300);
    let transport = Arc::new(ScriptedTransport::new());
    let spec = PromptSpec::default();
    let from_text = remote(JudgeConfig::default(), &transport).judge_triplets(&spec, &ts, &set).unwrap();
    let from_labels = Judge::new(JudgeConfig::default()).unwrap().judge_triplets(&spec, &ts, &set).unwrap();
    let labels = set.labels().unwrap();
    let mut decided = 0;
    for (t, l) in from_text.judgments.iter().zip(&from_labels.judgments) {
        // the label judge falls back to distance when labels do not decide
        if ground_truth_positive(&t.triplet, labels).is_some() {
            assert_eq!(t.verdict, l.verdict);
            decided += 1;
        } else {
            assert_eq!(t.verdict, TripletVerdict::Ambiguous);
        }
    }
    assert!(decided > 50);
    assert_eq!(from_text.stats.remote_calls, transport.calls());
}

#[test]
fn in_flight_requests_stay_bounded() {
    let set = corpus();
    let ts = triplets(&set, 64);
    let transport = Arc::new(ScriptedTransport {
        delay: Duration::from_millis(5),
        ..Default::default()
    });
    let cfg = JudgeConfig {
        max_in_flight: 3,
        ..Default::default()
    };
    remote(cfg, &transport).judge_triplets(&PromptSpec::default(), &ts, &set).unwrap();
    assert_eq!(transport.calls(), 64);
    assert!(transport.peak() <= 3, "peak {}", transport.peak());
    assert!(transport.peak() >= 2);
}

#[test]
fn cached_prompts_are_never_sent_twice() {
    let set = corpus();
    let mut ts = triplets(&set, 100);
    // repeat some questions inside one batch
    ts.extend_from_within(..30);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = JudgeConfig {
        cache_path: Some(tmp.path().join("cache.jsonl")),
        ..Default::default()
    };
    let transport = Arc::new(ScriptedTransport::new());
    let spec = PromptSpec::default();
    let first = remote(cfg.clone(), &transport).judge_triplets(&spec, &ts, &set).unwrap();
    assert_eq!(transport.calls(), 100);
    assert_eq!(first.stats.queries, 130);

    let second = remote(cfg.clone(), &transport).judge_triplets(&spec, &ts, &set).unwrap();
    assert_eq!(transport.calls(), 100);
    assert_eq!(second.stats.cache_hits, 130);
    assert_eq!(second.stats.remote_calls, 0);
    assert_eq!(first.judgments, second.judgments);

    let prompts = transport.prompts.lock().unwrap();
    let distinct: std::collections::HashSet<&String> = prompts.iter().collect();
    assert_eq!(distinct.len(), prompts.len());
}

#[test]
fn replay_serves_pairs_from_a_recorded_cache() {
    let set = corpus();
    let pairs: Vec<(usize, usize)> = (0..40).map(|i| (i, if i % 2 == 0 { i + 6 } else { i + 1 })).collect();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = JudgeConfig {
        cache_path: Some(tmp.path().join("cache.jsonl")),
        ..Default::default()
    };
    let transport = Arc::new(ScriptedTransport::new());
    let spec = PromptSpec::default();
    let recorded = remote(cfg.clone(), &transport).judge_pairs(&spec, &pairs, &set).unwrap();
    assert!(recorded.judgments.iter().any(|j| j.verdict == PairVerdict::Same));
    assert!(recorded.judgments.iter().any(|j| j.verdict == PairVerdict::Different));

    let mut replay = Judge::new(JudgeConfig {
        kind: JudgeKind::Replay,
        ..cfg
    })
    .unwrap();
    let replayed = replay.judge_pairs(&spec, &pairs, &set).unwrap();
    let verdicts = |j: &[guided_clustering::oracle::PairJudgment]| j.iter().map(|p| p.verdict).collect::<Vec<_>>();
    assert_eq!(verdicts(&recorded.judgments), verdicts(&replayed.judgments));
    assert_eq!(transport.calls(), 40);
}

#[test]
fn failed_calls_are_counted_and_not_cached() {
    let set = corpus();
    let ts = triplets(&set, 10);
    let transport = Arc::new(ScriptedTransport {
        fail: true,
        ..Default::default()
    });
    let cfg = JudgeConfig {
        max_retries: 2,
        backoff_base_ms: 1,
        ..Default::default()
    };
    let mut judge = remote(cfg, &transport);
    let out = judge.judge_triplets(&PromptSpec::default(), &ts, &set).unwrap();
    assert_eq!(out.stats.transport_failures, 10);
    assert_eq!(transport.calls(), 30);
    assert!(out.judgments.iter().all(|j| j.verdict == TripletVerdict::Ambiguous && j.error.is_some()));
}
