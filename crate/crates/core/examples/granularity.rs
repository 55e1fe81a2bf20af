//! Pick the number of clusters from judged pairs along a merge history, next
//! to the label-free baselines.

use guided_clustering::cluster::two_step_hierarchy;
use guided_clustering::eval::granularity_error;
use guided_clustering::granularity::{baseline_select, choose_granularity, sample_step_pairs, Baseline, GranularityConfig};
use guided_clustering::oracle::{Judge, JudgeConfig, PromptSpec};
use guided_clustering::synth::{hierarchical_mixture, HierarchySpec};

fn main() -> guided_clustering::Result<()> {
    let k_true = 25;
    let set = hierarchical_mixture(&HierarchySpec {
        classes: k_true,
        ..Default::default()
    })?;
    let cfg = GranularityConfig {
        lambda: 3,
        ..Default::default()
    };
    let (_, history) = two_step_hierarchy(&set, cfg.k_max, 0)?;
    let pairs: Vec<(usize, usize)> = sample_step_pairs(&history, &cfg)?.iter().map(|p| p.pair).collect();
    let judged = Judge::new(JudgeConfig::default())?.judge_pairs(&PromptSpec::default(), &pairs, &set)?;
    let decision = choose_granularity(&history, &judged.judgments, &cfg)?;
    println!(
        "{} pairs judged, chosen k = {} (true {k_true}, error {:.1}%)",
        decision.judged,
        decision.k_star,
        granularity_error(decision.k_star, k_true)
    );
    for k in [k_true / 2, k_true, 2 * k_true] {
        println!("  score at k={k}: {:.3}", decision.scores[&k]);
    }
    for b in [Baseline::Silhouette, Baseline::Elbow, Baseline::Bic, Baseline::ClusterSize] {
        let k = baseline_select(&history, &set, b, &cfg)?;
        println!("{:<13} k = {k:>3} (error {:.1}%)", b.name(), granularity_error(k, k_true));
    }
    Ok(())
}
