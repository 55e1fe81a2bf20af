//! Seeded synthetic corpora with known labels, for tests, examples and
//! benchmarking without real encoders.

use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

/// Isotropic Gaussian clusters with random centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureSpec {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    /// Standard deviation of the center coordinates.
    pub center_scale: f64,
    /// Standard deviation of points around their center.
    pub noise: f64,
    pub seed: u64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        MixtureSpec {
            n: 3000,
            k: 20,
            d: 16,
            center_scale: 0.7,
            noise: 0.5,
            seed: 0,
        }
    }
}

fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Text standing in for an utterance; it names the class so a scripted
/// judge can answer from text alone.
pub fn synthetic_text(i: usize, class: u64) -> String {
    format!("sample {i} about topic {class}")
}

fn finish(vectors: Array2<f64>, labels: Vec<u64>) -> Result<EmbeddingSet> {
    let texts = labels.iter().enumerate().map(|(i, &c)| synthetic_text(i, c)).collect();
    EmbeddingSet::from_vectors(vectors)?.with_texts(texts)?.with_raw_labels(&labels)
}

/// Point `i` belongs to class `i % k`.
pub fn gaussian_mixture(spec: &MixtureSpec) -> Result<EmbeddingSet> {
    if spec.k == 0 || spec.k > spec.n || spec.d == 0 {
        return Err(Error::arg("mixture needs 1 <= k <= n and d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = normal_matrix(spec.k, spec.d, spec.center_scale, &mut rng);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::arg(e.to_string()))?;
    let labels: Vec<u64> = (0..spec.n).map(|i| (i % spec.k) as u64).collect();
    let vectors = Array2::from_shape_fn((spec.n, spec.d), |(i, j)| centers[[labels[i] as usize, j]] + noise.sample(&mut rng));
    finish(vectors, labels)
}

/// How a clean embedding is degraded into a weaker "base" embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionSpec {
    /// Extra dimensions appended to every row.
    pub nuisance_dims: usize,
    /// Number of groups the extra dimensions cluster into, independent of the
    /// labels. Zero gives unstructured noise.
    pub nuisance_groups: usize,
    pub nuisance_scale: f64,
    /// Strength of the random linear mixing `I + mix * G` over all dimensions.
    pub mix: f64,
    /// Noise added to every coordinate after mixing.
    pub noise: f64,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            nuisance_dims: 16,
            nuisance_groups: 0,
            nuisance_scale: 3.0,
            mix: 0.3,
            noise: 0.1,
            seed: 1,
        }
    }
}

/// Appends nuisance dimensions (optionally clustered along groups unrelated
/// to the labels), mixes all dimensions with a random linear map and adds
/// noise. Ids, texts and labels carry over.
pub fn corrupt(set: &EmbeddingSet, spec: &CorruptionSpec) -> Result<EmbeddingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, nd) = (set.n(), spec.nuisance_dims);
    let nuisance = if spec.nuisance_groups == 0 {
        normal_matrix(n, nd, spec.nuisance_scale, &mut rng)
    } else {
        let centers = normal_matrix(spec.nuisance_groups, nd, spec.nuisance_scale, &mut rng);
        let groups: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.nuisance_groups)).collect();
        let jitter = normal_matrix(n, nd, 0.25 * spec.nuisance_scale, &mut rng);
        Array2::from_shape_fn((n, nd), |(i, j)| centers[[groups[i], j]] + jitter[[i, j]])
    };
    let joined = concatenate(Axis(1), &[set.vectors().view(), nuisance.view()]).expect("same row count");
    let dim = joined.ncols();
    let mixing = Array2::<f64>::eye(dim) + normal_matrix(dim, dim, spec.mix / (dim as f64).sqrt(), &mut rng);
    let mut out = joined.dot(&mixing);
    out += &normal_matrix(n, dim, spec.noise, &mut rng);
    set.with_vectors(out)
}

/// Classes made of several tight sub-blobs around a class center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchySpec {
    pub n: usize,
    pub classes: usize,
    pub subclusters: usize,
    pub d: usize,
    pub class_scale: f64,
    /// Spread of sub-blob centers around their class center.
    pub sub_scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for HierarchySpec {
    fn default() -> Self {
        HierarchySpec {
            n: 3000,
            classes: 10,
            subclusters: 2,
            d: 16,
            class_scale: 3.0,
            sub_scale: 1.0,
            noise: 0.5,
            seed: 0,
        }
    }
}

/// Point `i` belongs to sub-blob `i % (classes * subclusters)` and is
/// labeled with that sub-blob's class.
pub fn hierarchical_mixture(spec: &HierarchySpec) -> Result<EmbeddingSet> {
    let blobs = spec.classes * spec.subclusters;
    if blobs == 0 || blobs > spec.n || spec.d == 0 {
        return Err(Error::arg("hierarchy needs classes, subclusters >= 1 and enough points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let class_centers = normal_matrix(spec.classes, spec.d, spec.class_scale, &mut rng);
    let offsets = normal_matrix(blobs, spec.d, spec.sub_scale, &mut rng);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::arg(e.to_string()))?;
    let blob_of: Vec<usize> = (0..spec.n).map(|i| i % blobs).collect();
    let labels: Vec<u64> = blob_of.iter().map(|&b| (b / spec.subclusters) as u64).collect();
    let vectors = Array2::from_shape_fn((spec.n, spec.d), |(i, j)| {
        let b = blob_of[i];
        class_centers[[b / spec.subclusters, j]] + offsets[[b, j]] + noise.sample(&mut rng)
    });
    finish(vectors, labels)
}
