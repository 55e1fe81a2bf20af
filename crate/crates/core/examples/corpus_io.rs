//! Write a synthetic embedding set to disk, load it back and standardize it.

use guided_clustering::corpus::{load_embedding_set, save_embedding_set, standardize};
use guided_clustering::synth::{gaussian_mixture, MixtureSpec};

fn main() -> guided_clustering::Result<()> {
    let set = gaussian_mixture(&MixtureSpec {
        n: 500,
        k: 5,
        d: 8,
        ..Default::default()
    })?;
    let dir = std::env::temp_dir().join("guided-clustering-corpus-io");
    save_embedding_set(&set, dir.join("mixture"))?;
    println!("wrote {} and its .meta.json sidecar", dir.join("mixture.emb").display());

    let loaded = load_embedding_set(dir.join("mixture"))?;
    println!("loaded {} x {}, {} label classes", loaded.n(), loaded.d(), loaded.labels().map_or(0, |l| l.num_classes()));
    println!("first text: {:?}", loaded.texts().unwrap()[0]);
    assert_eq!(loaded.vectors(), set.vectors());

    let (scaled, stats) = standardize(&loaded)?;
    println!("dimension 0: mean {:.3}, std {:.3} before scaling", stats.mean[0], stats.std[0]);
    let col = scaled.vectors().column(0);
    println!("dimension 0 after: mean {:.1e}", col.sum() / col.len() as f64);
    Ok(())
}
