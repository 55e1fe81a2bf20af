use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{sq_dist, ClusterModel};
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

/// Student's-t soft cluster memberships, one row per instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftAssignment {
    pub probs: Array2<f64>,
    pub alpha: f64,
}

/// Per-instance entropy of the soft assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub values: Vec<f64>,
}

impl EntropyProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean_over(&self, idx: impl IntoIterator<Item = usize>) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for i in idx {
            sum += self.values[i];
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// `p_ik ∝ (1 + |z_i - μ_k|² / α)^(-(α+1)/2)`, normalized per row.
///
/// Weights are combined in log space so that distant centroids do not
/// underflow before normalization.
pub fn soft_assign(set: &EmbeddingSet, model: &ClusterModel, alpha: f64) -> Result<SoftAssignment> {
    if !(alpha > 0.0) {
        return Err(Error::arg(format!("alpha must be positive, got {alpha}")));
    }
    if model.k < 1 || model.centroids.nrows() != model.k {
        return Err(Error::arg("model has no centroids"));
    }
    if model.centroids.ncols() != set.d() {
        return Err(Error::arg(format!(
            "centroid dimension {} does not match embedding dimension {}",
            model.centroids.ncols(),
            set.d()
        )));
    }
    let exponent = -(alpha + 1.0) / 2.0;
    let mut probs = Array2::<f64>::zeros((set.n(), model.k));
    for (i, mut row) in probs.axis_iter_mut(Axis(0)).enumerate() {
        let z = set.row(i);
        for (k, mu) in model.centroids.axis_iter(Axis(0)).enumerate() {
            row[k] = exponent * (1.0 + sq_dist(z, mu) / alpha).ln();
        }
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    Ok(SoftAssignment { probs, alpha })
}

/// `H_i = -Σ_k p_ik ln p_ik`, with `0 ln 0 = 0`.
pub fn entropy(soft: &SoftAssignment) -> EntropyProfile {
    let values = soft
        .probs
        .axis_iter(Axis(0))
        .map(|row| -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>())
        .map(|h| h.max(0.0))
        .collect();
    EntropyProfile { values }
}
