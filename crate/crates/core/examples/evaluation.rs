//! Clustering accuracy, NMI and the multi-seed k-means report.

use guided_clustering::eval::{evaluate_kmeans, format_table, granularity_error, hungarian_accuracy, nmi, DEFAULT_SEEDS};
use guided_clustering::synth::{gaussian_mixture, MixtureSpec};

fn main() -> guided_clustering::Result<()> {
    let gt = [0, 0, 1, 1, 2, 2];
    let pred = [1, 1, 0, 2, 2, 2];
    println!("accuracy {:.4}, nmi {:.4}", hungarian_accuracy(&pred, &gt)?, nmi(&pred, &gt)?);
    println!("choosing 99 clusters for 77 classes is a {:.2}% error", granularity_error(99, 77));

    let mut rows = Vec::new();
    for scale in [0.5, 1.0, 2.0] {
        let set = gaussian_mixture(&MixtureSpec {
            n: 1000,
            k: 10,
            center_scale: scale,
            ..Default::default()
        })?;
        rows.push((format!("spread {scale}"), evaluate_kmeans(&set, None, &DEFAULT_SEEDS)?));
    }
    let named: Vec<(&str, _)> = rows.iter().map(|(n, r)| (n.as_str(), r)).collect();
    print!("{}", format_table(&named));
    Ok(())
}
