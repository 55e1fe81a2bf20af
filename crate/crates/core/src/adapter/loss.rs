use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::AdapterModel;

/// Gradients of the loss with respect to the adapter parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Gradients {
    /// Flattened in the same order as [`AdapterModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weight.iter().chain(self.bias.iter()).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub grads: Gradients,
}

/// `-ln softmax(sims / tau)[positive]`, computed with a shifted log-sum-exp.
pub fn nce_term(sims: &[f64], positive: usize, tau: f64) -> f64 {
    let max = sims.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s / tau));
    let lse = max + sims.iter().map(|&s| (s / tau - max).exp()).sum::<f64>().ln();
    lse - sims[positive] / tau
}

const MIN_NORM: f64 = 1e-12;

/// Cosine similarity and its gradients with respect to both arguments.
fn cosine_grad(u: ArrayView1<f64>, v: ArrayView1<f64>) -> (f64, Array1<f64>, Array1<f64>) {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu < MIN_NORM || nv < MIN_NORM {
        return (0.0, Array1::zeros(u.len()), Array1::zeros(v.len()));
    }
    let s = u.dot(&v) / (nu * nv);
    let du = &v / (nu * nv) - &u * (s / (nu * nu));
    let dv = &u / (nu * nv) - &v * (s / (nv * nv));
    (s, du, dv)
}

/// One softmax term: the query, its positive, and the deduplicated pool
/// (positive first). Accumulates `scale * dL/dy` into `gy`.
fn term(y: &Array2<f64>, query: usize, pool: &[usize], tau: f64, scale: f64, gy: &mut Array2<f64>) -> f64 {
    let parts: Vec<_> = pool.iter().map(|&c| cosine_grad(y.row(query), y.row(c))).collect();
    let sims: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let loss = nce_term(&sims, 0, tau);
    if pool.len() == 1 {
        return loss;
    }
    let max = sims.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s / tau));
    let weights: Vec<f64> = sims.iter().map(|&s| (s / tau - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for (l, ((_, du, dv), w)) in parts.iter().zip(&weights).enumerate() {
        let dl_ds = (w / total - if l == 0 { 1.0 } else { 0.0 }) / tau * scale;
        if dl_ds == 0.0 {
            continue;
        }
        gy.row_mut(query).scaled_add(dl_ds, du);
        gy.row_mut(pool[l]).scaled_add(dl_ds, dv);
    }
    loss
}

fn pool_for(query: usize, positive: usize, own_negative: usize, others: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut pool = vec![positive];
    for c in [own_negative].into_iter().chain(others.flat_map(|(x, y)| [x, y])) {
        if c != query && !pool.contains(&c) {
            pool.push(c);
        }
    }
    pool
}

/// Mean over the batch of the anchor-direction term plus the swapped term.
///
/// `batch` holds `(anchor, positive, negative)` row indices into `vectors`.
/// In the anchor direction the pool is the triplet's two choices plus the
/// choices of every other triplet; in the swapped direction the positive is
/// the query and the pool is the anchor, the negative and the other triplets'
/// anchors and negatives. Pools are deduplicated by row and never contain
/// the query itself.
pub fn triplet_batch_loss(adapter: &AdapterModel, batch: &[(usize, usize, usize)], vectors: &Array2<f64>, tau: f64) -> LossValue {
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut rows: Vec<usize> = Vec::new();
    for &(a, p, n) in batch {
        for id in [a, p, n] {
            local.entry(id).or_insert_with(|| {
                rows.push(id);
                rows.len() - 1
            });
        }
    }
    let x = vectors.select(Axis(0), &rows);
    let y = adapter.forward(&x);
    let mut gy = Array2::<f64>::zeros(y.raw_dim());
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut loss = 0.0;
    let l = |id: usize| local[&id];
    for (t, &(a, p, n)) in batch.iter().enumerate() {
        let others = || batch.iter().enumerate().filter(move |(u, _)| *u != t).map(|(_, tr)| *tr);
        let pool = pool_for(l(a), l(p), l(n), others().map(|(_, p2, n2)| (l(p2), l(n2))));
        loss += term(&y, l(a), &pool, tau, scale, &mut gy);
        let pool = pool_for(l(p), l(a), l(n), others().map(|(a2, _, n2)| (l(a2), l(n2))));
        loss += term(&y, l(p), &pool, tau, scale, &mut gy);
    }
    let weight = x.t().dot(&gy);
    let bias = gy.sum_axis(Axis(0));
    LossValue {
        loss: loss * scale,
        grads: Gradients { weight, bias },
    }
}
