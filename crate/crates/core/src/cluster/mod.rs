//! Clustering kernels: K-means, mini-batch K-means, agglomerative clustering
//! with a full merge history, Student's-t soft assignment and entropy.

mod agglomerative;
mod kmeans;
mod soft;
mod two_step;

pub use agglomerative::{agglomerative, linkage_history, Linkage, MergeHistory, MergeStep, Stop};
pub use kmeans::{kmeans, kmeans_best_of, kmeans_vectors, minibatch_kmeans, minibatch_kmeans_vectors, MiniBatchParams, MAX_LLOYD_ITERS};
pub use soft::{entropy, soft_assign, EntropyProfile, SoftAssignment};
pub use two_step::two_step_hierarchy;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Agglomerative presets tuned on standardized 768-d sentence embeddings.
/// They are corpus-calibration knobs, not universal constants.
pub const MAX_DISTANCE_INSTRUCTOR: f64 = 67.0;
pub const MAX_DISTANCE_E5: f64 = 77.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kmeans,
    MinibatchKmeans,
    Agglomerative,
}

/// Bookkeeping that does not affect the partition itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: Option<u64>,
    pub iterations: usize,
    /// Clusters that went empty and were reseeded at the farthest point.
    pub reseeded: Vec<usize>,
    /// Inertia after every centroid update (Lloyd only).
    pub inertia_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub method: Method,
    #[serde(default)]
    pub meta: ModelMeta,
}

impl ClusterModel {
    /// Builds a model from a hard partition, with centroids at member means.
    pub fn from_assignments(points: &Array2<f64>, assignments: Vec<usize>, k: usize, method: Method) -> Self {
        let centroids = centroids_of(points, &assignments, k);
        let inertia = inertia_of(points, &assignments, &centroids);
        ClusterModel {
            k,
            centroids,
            assignments,
            inertia,
            method,
            meta: ModelMeta::default(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Member indices per cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &a) in self.assignments.iter().enumerate() {
            out[a].push(i);
        }
        out
    }
}

pub(crate) fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid (lowest index on ties) and squared distance, per point.
pub(crate) fn nearest_centroids(points: &Array2<f64>, centroids: &Array2<f64>) -> Vec<(usize, f64)> {
    (0..points.nrows())
        .into_par_iter()
        .map(|i| nearest_one(points.row(i), centroids))
        .collect()
}

pub(crate) fn nearest_one(x: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.axis_iter(Axis(0)).enumerate() {
        let d = sq_dist(x, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub(crate) fn centroids_of(points: &Array2<f64>, assignments: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        let mut row = sums.row_mut(a);
        row += &points.row(i);
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            sums.row_mut(c).mapv_inplace(|v| v / cnt as f64);
        }
    }
    sums
}

pub(crate) fn inertia_of(points: &Array2<f64>, assignments: &[usize], centroids: &Array2<f64>) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(points.row(i), centroids.row(a)))
        .sum()
}
