//! Entropy-ranked triplet mining compared with uniform random triplets.

use guided_clustering::cluster::{entropy, minibatch_kmeans, soft_assign, MiniBatchParams};
use guided_clustering::eval::gt_triplet_count;
use guided_clustering::sampler::{annotate_entropy, sample_random_triplets, sample_triplets, SamplerConfig};
use guided_clustering::synth::{gaussian_mixture, MixtureSpec};

fn main() -> guided_clustering::Result<()> {
    let set = gaussian_mixture(&MixtureSpec::default())?;
    let model = minibatch_kmeans(&set, MiniBatchParams { k: 40, ..Default::default() }, 0)?;
    let soft = soft_assign(&set, &model, 1.0)?;
    let profile = entropy(&soft);

    let cfg = SamplerConfig::default();
    let mined = sample_triplets(&set, &model, &soft, &profile, &cfg, 0)?;
    let mut random = sample_random_triplets(&set, cfg.budget, 0)?;
    annotate_entropy(&mut random.triplets, &profile);

    let labels = set.labels().unwrap();
    for (name, sample) in [("entropy", &mined), ("random", &random)] {
        let mean = sample.triplets.iter().map(|t| t.anchor_entropy).sum::<f64>() / sample.triplets.len() as f64;
        println!(
            "{name:<8} {} triplets, mean anchor entropy {mean:.3}, {} with exactly one same-label choice",
            sample.triplets.len(),
            gt_triplet_count(&sample.triplets, labels)
        );
    }
    let t = mined.triplets[0];
    println!("first mined triplet: anchor {} choices {} / {}", set.id(t.anchor), set.id(t.choice1), set.id(t.choice2));
    Ok(())
}
