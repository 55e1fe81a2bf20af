//! Agglomerative clustering via the nearest-neighbor chain algorithm with
//! Lance–Williams distance updates.
//!
//! Node ids follow the usual dendrogram convention: leaves are `0..L`, and the
//! cluster created by step `s` gets id `L + s`.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{sq_dist, ClusterModel, Method};
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Ward,
    Average,
}

/// Where to stop when turning a history into a flat clustering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// Apply merges while the merge distance is at most this value.
    MaxDistance(f64),
    TargetK(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub new_id: usize,
    /// Cluster count after this merge.
    pub resulting_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeHistory {
    pub linkage: Linkage,
    pub leaf_count: usize,
    pub point_count: usize,
    /// Points covered by each leaf.
    pub leaf_members: Vec<Vec<usize>>,
    pub steps: Vec<MergeStep>,
}

fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    n * i - i * (i + 1) / 2 + (j - i - 1)
}

/// Runs the merge sequence over weighted points (weights act as cluster sizes).
///
/// Ward distances are reported as `sqrt(2 w_a w_b / (w_a + w_b)) * |c_a - c_b|`,
/// which equals the Euclidean distance for two single points.
pub fn linkage_history(
    points: &Array2<f64>,
    weights: &[f64],
    leaf_members: Vec<Vec<usize>>,
    linkage: Linkage,
) -> Result<MergeHistory> {
    let n = points.nrows();
    if n < 1 || weights.len() != n || leaf_members.len() != n {
        return Err(Error::arg("linkage needs one weight and member list per leaf"));
    }
    if linkage == Linkage::Average && weights.iter().any(|&w| w != 1.0) {
        return Err(Error::arg("average linkage is only defined over unit-weight points"));
    }
    let point_count = leaf_members.iter().map(Vec::len).sum();

    // Ward works on squared distances scaled by the size factor; average on
    // plain Euclidean distances.
    let mut dist = vec![0.0f64; n * n.saturating_sub(1) / 2];
    for i in 0..n {
        for j in i + 1..n {
            let d2 = sq_dist(points.row(i), points.row(j));
            dist[condensed_index(n, i, j)] = match linkage {
                Linkage::Ward => 2.0 * weights[i] * weights[j] / (weights[i] + weights[j]) * d2,
                Linkage::Average => d2.sqrt(),
            };
        }
    }

    let mut size: Vec<f64> = weights.to_vec();
    let mut active = vec![true; n];
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::with_capacity(n);

    for _ in 0..n.saturating_sub(1) {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("at least two active clusters"));
        }
        let (x, y, d) = loop {
            let x = *chain.last().unwrap();
            let (mut y, mut best) = if chain.len() > 1 {
                let p = chain[chain.len() - 2];
                (p, dist[condensed_index(n, x, p)])
            } else {
                (usize::MAX, f64::INFINITY)
            };
            for j in 0..n {
                if j == x || !active[j] {
                    continue;
                }
                let dj = dist[condensed_index(n, x, j)];
                if dj < best {
                    best = dj;
                    y = j;
                }
            }
            if chain.len() > 1 && y == chain[chain.len() - 2] {
                chain.pop();
                chain.pop();
                break (x, y, best);
            }
            chain.push(y);
        };
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        let (sx, sy) = (size[lo], size[hi]);
        let dxy = d;
        // merged cluster lives in slot `hi`
        for k in 0..n {
            if !active[k] || k == lo || k == hi {
                continue;
            }
            let dxk = dist[condensed_index(n, lo, k)];
            let dyk = dist[condensed_index(n, hi, k)];
            let new = match linkage {
                Linkage::Ward => {
                    let sk = size[k];
                    ((sx + sk) * dxk + (sy + sk) * dyk - sk * dxy) / (sx + sy + sk)
                }
                Linkage::Average => (sx * dxk + sy * dyk) / (sx + sy),
            };
            dist[condensed_index(n, hi, k)] = new;
        }
        active[lo] = false;
        size[hi] = sx + sy;
        let reported = match linkage {
            Linkage::Ward => dxy.max(0.0).sqrt(),
            Linkage::Average => dxy,
        };
        raw.push((lo, hi, reported));
    }

    // NN-chain emits merges out of order; replay them sorted by distance and
    // relabel with a union-find over slots.
    raw.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut node_of: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut steps = Vec::with_capacity(raw.len());
    for (s, &(a, b, d)) in raw.iter().enumerate() {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let (na, nb) = (node_of[ra], node_of[rb]);
        parent[ra] = rb;
        node_of[rb] = n + s;
        steps.push(MergeStep {
            left: na.min(nb),
            right: na.max(nb),
            distance: d,
            new_id: n + s,
            resulting_k: n - s - 1,
        });
    }
    Ok(MergeHistory {
        linkage,
        leaf_count: n,
        point_count,
        leaf_members,
        steps,
    })
}

impl MergeHistory {
    /// Number of merges applied to reach `k` clusters.
    fn merges_for(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.leaf_count {
            return Err(Error::arg(format!("k must be in 1..={}, got {k}", self.leaf_count)));
        }
        Ok(self.leaf_count - k)
    }

    /// Flat labels per leaf at `k` clusters, numbered by first appearance.
    pub fn cut_leaves(&self, k: usize) -> Result<Vec<usize>> {
        let merges = self.merges_for(k)?;
        let l = self.leaf_count;
        let mut parent: Vec<usize> = (0..l + merges).collect();
        for step in &self.steps[..merges] {
            parent[step.left] = step.new_id;
            parent[step.right] = step.new_id;
        }
        let mut root_label = vec![usize::MAX; l + merges];
        let mut next = 0;
        let mut out = Vec::with_capacity(l);
        for leaf in 0..l {
            let mut r = leaf;
            while parent[r] != r {
                r = parent[r];
            }
            if root_label[r] == usize::MAX {
                root_label[r] = next;
                next += 1;
            }
            out.push(root_label[r]);
        }
        Ok(out)
    }

    /// Leaf holding each point.
    pub fn point_leaves(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.point_count];
        for (leaf, members) in self.leaf_members.iter().enumerate() {
            for &p in members {
                out[p] = leaf;
            }
        }
        out
    }

    /// Flat labels per point at `k` clusters.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let leaves = self.cut_leaves(k)?;
        Ok(self.point_leaves().into_iter().map(|l| leaves[l]).collect())
    }

    /// Member lists (sorted point indices) of the two clusters joined at
    /// each step, yielded in merge order.
    pub fn for_each_merge<F>(&self, mut f: F)
    where
        F: FnMut(&MergeStep, &[usize], &[usize]),
    {
        let mut members: Vec<Vec<usize>> = self.leaf_members.clone();
        members.resize(self.leaf_count + self.steps.len(), Vec::new());
        for step in &self.steps {
            let left = std::mem::take(&mut members[step.left]);
            let right = std::mem::take(&mut members[step.right]);
            f(step, &left, &right);
            let mut merged = left;
            merged.extend(right);
            members[step.new_id] = merged;
        }
    }

    /// Partition sequence as sets of member sets, from `leaf_count` down to 1.
    pub fn partition_sequence(&self) -> Vec<Vec<Vec<usize>>> {
        let mut current: Vec<Option<Vec<usize>>> = self
            .leaf_members
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.sort_unstable();
                Some(m)
            })
            .collect();
        let snapshot = |c: &[Option<Vec<usize>>]| {
            let mut parts: Vec<Vec<usize>> = c.iter().flatten().cloned().collect();
            parts.sort();
            parts
        };
        let mut out = vec![snapshot(&current)];
        for step in &self.steps {
            let mut a = current[step.left].take().unwrap_or_default();
            let b = current[step.right].take().unwrap_or_default();
            a.extend(b);
            a.sort_unstable();
            current.push(Some(a));
            out.push(snapshot(&current));
        }
        out
    }

    /// Cluster count at which leaves `a` and `b` first share a cluster.
    /// Equal leaves share a cluster at every level.
    pub fn join_level(&self, a: usize, b: usize) -> usize {
        if a == b {
            return self.leaf_count;
        }
        self.join_level_with(&self.parents(), a, b)
    }

    /// As [`MergeHistory::join_level`] with precomputed [`MergeHistory::parents`].
    pub fn join_level_with(&self, parent: &[usize], a: usize, b: usize) -> usize {
        if a == b {
            return self.leaf_count;
        }
        let mut ancestors = HashSet::new();
        let mut x = a;
        while x != usize::MAX {
            ancestors.insert(x);
            x = parent[x];
        }
        let mut y = b;
        while !ancestors.contains(&y) {
            y = parent[y];
        }
        self.steps[y - self.leaf_count].resulting_k
    }

    /// Parent node of every node, `usize::MAX` at the root.
    pub fn parents(&self) -> Vec<usize> {
        let mut parent = vec![usize::MAX; self.leaf_count + self.steps.len()];
        for step in &self.steps {
            parent[step.left] = step.new_id;
            parent[step.right] = step.new_id;
        }
        parent
    }
}

/// Agglomerative clustering over points. The full history down to one
/// cluster is always returned; `stop` only decides `ClusterModel::k`.
pub fn agglomerative(set: &EmbeddingSet, linkage: Linkage, stop: Stop) -> Result<(ClusterModel, MergeHistory)> {
    let n = set.n();
    if let Stop::TargetK(k) = stop {
        if k == 0 || k > n {
            return Err(Error::arg(format!("target_k must be in 1..={n}, got {k}")));
        }
    }
    let weights = vec![1.0; n];
    let members = (0..n).map(|i| vec![i]).collect();
    let history = linkage_history(set.vectors(), &weights, members, linkage)?;
    let k = match stop {
        Stop::TargetK(k) => k,
        Stop::MaxDistance(tau) => n - history.steps.iter().take_while(|s| s.distance <= tau).count(),
    };
    let labels = history.cut(k)?;
    let model = ClusterModel::from_assignments(set.vectors(), labels, k, Method::Agglomerative);
    Ok((model, history))
}
