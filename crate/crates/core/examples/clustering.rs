//! The clustering back ends on one corpus, scored against its labels.

use guided_clustering::cluster::{agglomerative, kmeans, minibatch_kmeans, two_step_hierarchy, Linkage, MiniBatchParams, Stop};
use guided_clustering::eval::{hungarian_accuracy, nmi};
use guided_clustering::synth::{gaussian_mixture, MixtureSpec};

fn main() -> guided_clustering::Result<()> {
    let set = gaussian_mixture(&MixtureSpec {
        n: 1200,
        k: 8,
        d: 10,
        center_scale: 1.5,
        ..Default::default()
    })?;
    let gt = set.labels().unwrap().values();
    let score = |name: &str, pred: &[usize]| -> guided_clustering::Result<()> {
        println!("{name:<22} accuracy {:.3}  nmi {:.3}", hungarian_accuracy(pred, gt)?, nmi(pred, gt)?);
        Ok(())
    };

    let km = kmeans(&set, 8, 0)?;
    println!("k-means converged in {} iterations, inertia {:.1}", km.meta.iterations, km.inertia);
    score("k-means", &km.assignments)?;

    let mbk = minibatch_kmeans(&set, MiniBatchParams { k: 8, batch: 256, iters: 100 }, 0)?;
    score("mini-batch k-means", &mbk.assignments)?;

    let (ward, history) = agglomerative(&set, Linkage::Ward, Stop::TargetK(8))?;
    score("ward", &ward.assignments)?;
    println!("last merge joins clusters at distance {:.2}", history.steps.last().unwrap().distance);

    // large-corpus path: mini-batch k-means to 100 leaves, then Ward over the leaves
    let (_, two_step) = two_step_hierarchy(&set, 100, 0)?;
    score("two-step cut at 8", &two_step.cut(8)?)?;
    Ok(())
}
