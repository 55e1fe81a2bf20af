use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{centroids_of, inertia_of, nearest_centroids, nearest_one, sq_dist, ClusterModel, Method, ModelMeta};
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiniBatchParams {
    pub k: usize,
    pub batch: usize,
    pub iters: usize,
}

impl Default for MiniBatchParams {
    fn default() -> Self {
        MiniBatchParams {
            k: 100,
            batch: 1024,
            iters: 100,
        }
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::arg(format!("k must be in 1..={n}, got {k}")));
    }
    Ok(())
}

/// k-means++ seeding: first center uniform, the rest drawn proportionally to
/// the squared distance to the nearest chosen center.
fn plus_plus(points: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every remaining point duplicates a center
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, slot) in d2.iter_mut().enumerate() {
            let d = sq_dist(points.row(i), points.row(next));
            if d < *slot {
                *slot = d;
            }
        }
    }
    points.select(Axis(0), &chosen)
}

/// Moves the farthest point of a multi-member cluster into each empty cluster.
fn repair_empty(points: &Array2<f64>, assignments: &mut [usize], centroids: &mut Array2<f64>, reseeded: &mut Vec<usize>) {
    let k = centroids.nrows();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &a) in assignments.iter().enumerate() {
            if counts[a] > 1 {
                let d = sq_dist(points.row(i), centroids.row(a));
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        let Some(i) = far else { return };
        assignments[i] = empty;
        centroids.row_mut(empty).assign(&points.row(i));
        reseeded.push(empty);
    }
}

/// Single-point moves after Lloyd has settled: a point leaves its cluster
/// when the drop in that cluster's cost exceeds the rise in another's.
/// Lloyd fixed points that are not optimal are often escaped this way.
/// Returns the number of moves made.
fn hartigan_refine(points: &Array2<f64>, assignments: &mut [usize], centroids: &mut Array2<f64>) -> usize {
    let k = centroids.nrows();
    let mut size = vec![0.0f64; k];
    for &a in assignments.iter() {
        size[a] += 1.0;
    }
    let mut moves = 0;
    // each move strictly lowers inertia, so the sweep count is finite; the cap guards rounding
    for _ in 0..MAX_LLOYD_ITERS {
        let mut moved = false;
        for i in 0..points.nrows() {
            let from = assignments[i];
            if size[from] <= 1.0 {
                continue;
            }
            let x = points.row(i);
            let leave = size[from] / (size[from] - 1.0) * sq_dist(x, centroids.row(from));
            let mut best: Option<(usize, f64)> = None;
            for c in 0..k {
                if c == from {
                    continue;
                }
                let join = size[c] / (size[c] + 1.0) * sq_dist(x, centroids.row(c));
                if join < leave * (1.0 - 1e-12) && best.is_none_or(|(_, b)| join < b) {
                    best = Some((c, join));
                }
            }
            let Some((to, _)) = best else { continue };
            let new_from = (&centroids.row(from) * size[from] - x) / (size[from] - 1.0);
            let new_to = (&centroids.row(to) * size[to] + x) / (size[to] + 1.0);
            centroids.row_mut(from).assign(&new_from);
            centroids.row_mut(to).assign(&new_to);
            size[from] -= 1.0;
            size[to] += 1.0;
            assignments[i] = to;
            moved = true;
            moves += 1;
        }
        if !moved {
            break;
        }
    }
    moves
}

/// Lloyd iterations from k-means++ seeding, then single-point refinement, on raw vectors.
pub fn kmeans_vectors(points: &Array2<f64>, k: usize, seed: u64, max_iters: usize) -> Result<ClusterModel> {
    check_k(k, points.nrows())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut assignments: Vec<usize> = nearest_centroids(points, &centroids).into_iter().map(|p| p.0).collect();
    let mut meta = ModelMeta {
        seed: Some(seed),
        ..Default::default()
    };
    for iter in 0..max_iters.max(1) {
        repair_empty(points, &mut assignments, &mut centroids, &mut meta.reseeded);
        centroids = centroids_of(points, &assignments, k);
        meta.inertia_trace.push(inertia_of(points, &assignments, &centroids));
        meta.iterations = iter + 1;
        let next: Vec<usize> = nearest_centroids(points, &centroids).into_iter().map(|p| p.0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    // the loop may stop on the iteration cap with a fresh assignment
    repair_empty(points, &mut assignments, &mut centroids, &mut meta.reseeded);
    let mut centroids = centroids_of(points, &assignments, k);
    if hartigan_refine(points, &mut assignments, &mut centroids) > 0 {
        centroids = centroids_of(points, &assignments, k);
        meta.inertia_trace.push(inertia_of(points, &assignments, &centroids));
    }
    let inertia = inertia_of(points, &assignments, &centroids);
    Ok(ClusterModel {
        k,
        centroids,
        assignments,
        inertia,
        method: Method::Kmeans,
        meta,
    })
}

/// K-means with k-means++ seeding; Lloyd stops at an assignment fixpoint or
/// after 300 iterations, then single-point moves run until none helps.
pub fn kmeans(set: &EmbeddingSet, k: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_vectors(set.vectors(), k, seed, MAX_LLOYD_ITERS)
}

/// Lowest-inertia result over several seeds (first seed wins ties).
pub fn kmeans_best_of(set: &EmbeddingSet, k: usize, seeds: impl IntoIterator<Item = u64>) -> Result<ClusterModel> {
    let mut best: Option<ClusterModel> = None;
    for seed in seeds {
        let m = kmeans(set, k, seed)?;
        if best.as_ref().is_none_or(|b| m.inertia < b.inertia) {
            best = Some(m);
        }
    }
    best.ok_or_else(|| Error::arg("no seeds given"))
}

/// Mini-batch K-means with per-centroid learning rate `1 / count`.
///
/// After the last batch every point is assigned to its nearest center and
/// centroids are recomputed as member means.
pub fn minibatch_kmeans_vectors(points: &Array2<f64>, params: MiniBatchParams, seed: u64) -> Result<ClusterModel> {
    let n = points.nrows();
    let k = params.k;
    check_k(k, n)?;
    if params.batch == 0 {
        return Err(Error::arg("batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut counts = vec![0u64; k];
    for _ in 0..params.iters {
        let batch: Vec<usize> = if params.batch >= n {
            (0..n).collect()
        } else {
            index::sample(&mut rng, n, params.batch).into_vec()
        };
        let nearest: Vec<usize> = batch.iter().map(|&i| nearest_one(points.row(i), &centroids).0).collect();
        for (&i, &c) in batch.iter().zip(&nearest) {
            counts[c] += 1;
            let eta = 1.0 / counts[c] as f64;
            let x = points.row(i);
            centroids
                .row_mut(c)
                .zip_mut_with(&x, |mu, &xv| *mu += eta * (xv - *mu));
        }
    }
    let mut assignments: Vec<usize> = nearest_centroids(points, &centroids).into_iter().map(|p| p.0).collect();
    let mut meta = ModelMeta {
        seed: Some(seed),
        iterations: params.iters,
        ..Default::default()
    };
    repair_empty(points, &mut assignments, &mut centroids, &mut meta.reseeded);
    let centroids = centroids_of(points, &assignments, k);
    let inertia = inertia_of(points, &assignments, &centroids);
    Ok(ClusterModel {
        k,
        centroids,
        assignments,
        inertia,
        method: Method::MinibatchKmeans,
        meta,
    })
}

pub fn minibatch_kmeans(set: &EmbeddingSet, params: MiniBatchParams, seed: u64) -> Result<ClusterModel> {
    minibatch_kmeans_vectors(set.vectors(), params, seed)
}
