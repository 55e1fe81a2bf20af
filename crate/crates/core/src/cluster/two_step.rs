use super::kmeans::{minibatch_kmeans, MiniBatchParams};
use super::{linkage_history, ClusterModel, Linkage, MergeHistory};
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

/// Mini-batch K-means down to `k_start` clusters, then Ward agglomeration of
/// those clusters (centroids weighted by cluster size) down to one.
///
/// The returned history has the K-means clusters as leaves; its member lists
/// are unions of K-means memberships.
pub fn two_step_hierarchy(set: &EmbeddingSet, k_start: usize, seed: u64) -> Result<(ClusterModel, MergeHistory)> {
    if k_start < 1 || k_start > set.n() {
        return Err(Error::arg(format!("k_start must be in 1..={}, got {k_start}", set.n())));
    }
    let params = MiniBatchParams {
        k: k_start,
        ..MiniBatchParams::default()
    };
    let model = minibatch_kmeans(set, params, seed)?;
    let members = model.members();
    let weights: Vec<f64> = members.iter().map(|m| m.len() as f64).collect();
    let history = linkage_history(&model.centroids, &weights, members, Linkage::Ward)?;
    Ok((model, history))
}
