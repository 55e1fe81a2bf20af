//! Refine a degraded embedding with an adapter trained on judged triplets.

use guided_clustering::adapter::{apply_adapter, train, AdapterModel, TrainConfig};
use guided_clustering::cluster::{entropy, minibatch_kmeans, soft_assign, MiniBatchParams};
use guided_clustering::corpus::standardize;
use guided_clustering::eval::{evaluate_kmeans, format_table, DEFAULT_SEEDS};
use guided_clustering::oracle::{Judge, JudgeConfig, PromptSpec};
use guided_clustering::sampler::{sample_triplets, SamplerConfig};
use guided_clustering::synth::{corrupt, gaussian_mixture, CorruptionSpec, MixtureSpec};

fn main() -> guided_clustering::Result<()> {
    let clean = gaussian_mixture(&MixtureSpec::default())?;
    let (base, _) = standardize(&corrupt(&clean, &CorruptionSpec::default())?)?;

    let model = minibatch_kmeans(&base, MiniBatchParams::default(), 0)?;
    let soft = soft_assign(&base, &model, 1.0)?;
    let triplets = sample_triplets(&base, &model, &soft, &entropy(&soft), &SamplerConfig::default(), 0)?.triplets;
    let judged = Judge::new(JudgeConfig::default())?.judge_triplets(&PromptSpec::default(), &triplets, &base)?;

    let cfg = TrainConfig::default();
    let outcome = train(&AdapterModel::identity(base.d(), base.d()), &judged.judgments, &base, &cfg)?;
    println!(
        "trained on {} judgments for {} epochs, loss {:.3} -> {:.3}",
        outcome.used,
        cfg.epochs,
        outcome.loss_trace[0],
        outcome.loss_trace.last().unwrap()
    );
    let refined = apply_adapter(&outcome.adapter, &base)?;

    let before = evaluate_kmeans(&base, None, &DEFAULT_SEEDS)?;
    let after = evaluate_kmeans(&refined, None, &DEFAULT_SEEDS)?;
    print!("{}", format_table(&[("base", &before), ("refined", &after)]));
    Ok(())
}
