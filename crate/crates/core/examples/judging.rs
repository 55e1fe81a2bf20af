//! Judges answering triplet and pair questions: a label-backed judge, and a
//! remote judge whose transport is a local stand-in for a chat endpoint.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use guided_clustering::oracle::{
    render_triplet_prompt, ChatRequest, ChatTransport, Judge, JudgeConfig, JudgeKind, PromptSpec, TransportError,
};
use guided_clustering::sampler::sample_random_triplets;
use guided_clustering::synth::{gaussian_mixture, MixtureSpec};

/// Answers by reading the topic number out of each line of the prompt.
#[derive(Default)]
struct TopicReader {
    calls: AtomicUsize,
}

fn topic(prompt: &str, prefix: &str) -> Option<String> {
    let line = prompt.lines().find(|l| l.starts_with(prefix))?;
    line.rsplit("topic ").next().map(str::to_string)
}

impl ChatTransport for TopicReader {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let p = &request.prompt;
        let q = topic(p, "Query:");
        Ok(if topic(p, "Choice 1:") == q {
            "Choice 1".into()
        } else if topic(p, "Choice 2:") == q {
            "Choice 2".into()
        } else {
            "Neither".into()
        })
    }
}

fn main() -> guided_clustering::Result<()> {
    let set = gaussian_mixture(&MixtureSpec {
        n: 300,
        k: 4,
        d: 4,
        ..Default::default()
    })?;
    let triplets = sample_random_triplets(&set, 50, 0)?.triplets;
    let spec = PromptSpec::default();
    println!("{}\n", render_triplet_prompt(&spec, &triplets[0], &set)?);

    let mut labels = Judge::new(JudgeConfig::default())?;
    let by_label = labels.judge_triplets(&spec, &triplets, &set)?;
    println!("label judge: {:?}", by_label.stats);

    let transport = Arc::new(TopicReader::default());
    let cache = std::env::temp_dir().join("guided-clustering-judging-cache.jsonl");
    let _ = std::fs::remove_file(&cache);
    let cfg = JudgeConfig {
        kind: JudgeKind::Remote,
        cache_path: Some(cache.clone()),
        ..Default::default()
    };
    for round in 1..=2 {
        let mut remote = Judge::with_transport(cfg.clone(), transport.clone())?;
        let judged = remote.judge_triplets(&spec, &triplets, &set)?;
        println!(
            "remote round {round}: {:?}, transport calls so far {}",
            judged.stats,
            transport.calls.load(Ordering::SeqCst)
        );
    }
    println!("cache written to {}", cache.display());
    Ok(())
}
