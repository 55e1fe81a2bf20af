//! The whole loop from one config: two refinement iterations, granularity
//! selection and evaluation, then a resumed run that reuses every stage.

use guided_clustering::corpus::save_embedding_set;
use guided_clustering::pipeline::{report, run_pipeline, RunConfig, RunOptions};
use guided_clustering::synth::{corrupt, gaussian_mixture, CorruptionSpec, MixtureSpec};

fn main() -> guided_clustering::Result<()> {
    let root = std::env::temp_dir().join("guided-clustering-pipeline");
    let _ = std::fs::remove_dir_all(&root);
    let clean = gaussian_mixture(&MixtureSpec {
        n: 1500,
        k: 10,
        ..Default::default()
    })?;
    save_embedding_set(&corrupt(&clean, &CorruptionSpec::default())?, root.join("base"))?;

    let config = serde_json::json!({
        "embeddings": root.join("base"),
        "workdir": root.join("run"),
        "iterations": 2,
        "cluster": {"k": 50},
        "sampler": {"budget": 512},
        "hierarchy": {"k_start": 100},
        "granularity": {"k_max": 100, "lambda": 3},
        "judge": {"kind": "gt"},
    });
    let cfg: RunConfig = serde_json::from_value(config)?;
    let c = cfg.cost_estimate();
    println!("a remote judge would cost about ${:.3} for {} queries\n", c.dollars, c.queries);

    run_pipeline(&cfg, &RunOptions::default())?;
    print!("{}", report(&cfg.workdir)?);

    let resumed = run_pipeline(&cfg, &RunOptions { resume: true, ..Default::default() })?;
    println!("\nresumed run complete: {}", resumed.complete);
    Ok(())
}
