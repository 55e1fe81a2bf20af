//! Label-free selectors of k computed over the cuts of a merge history.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GranularityConfig;
use crate::cluster::MergeHistory;
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Silhouette,
    Elbow,
    Bic,
    ClusterSize,
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Silhouette => "silhouette",
            Baseline::Elbow => "elbow",
            Baseline::Bic => "bic",
            Baseline::ClusterSize => "cluster_size",
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silhouette" => Ok(Baseline::Silhouette),
            "elbow" => Ok(Baseline::Elbow),
            "bic" => Ok(Baseline::Bic),
            "cluster_size" | "cluster-size" => Ok(Baseline::ClusterSize),
            other => Err(Error::arg(format!("unknown baseline {other:?}"))),
        }
    }
}

/// Replays the merges, keeping one slot per live cluster. A merged cluster
/// reuses the slot of its larger side.
struct Walker<'h> {
    history: &'h MergeHistory,
    next_step: usize,
    slot_of_node: Vec<usize>,
    leaves_in: Vec<Vec<usize>>,
    live: Vec<bool>,
}

impl<'h> Walker<'h> {
    fn new(history: &'h MergeHistory) -> Self {
        let l = history.leaf_count;
        let mut slot_of_node = vec![usize::MAX; l + history.steps.len()];
        for (i, s) in slot_of_node.iter_mut().take(l).enumerate() {
            *s = i;
        }
        Walker {
            history,
            next_step: 0,
            slot_of_node,
            leaves_in: (0..l).map(|i| vec![i]).collect(),
            live: vec![true; l],
        }
    }

    fn k(&self) -> usize {
        self.history.leaf_count - self.next_step
    }

    /// Applies the next merge; returns `(kept, absorbed)` slots.
    fn merge(&mut self) -> (usize, usize) {
        let step = self.history.steps[self.next_step];
        self.next_step += 1;
        let (a, b) = (self.slot_of_node[step.left], self.slot_of_node[step.right]);
        let (keep, gone) = if self.leaves_in[a].len() >= self.leaves_in[b].len() { (a, b) } else { (b, a) };
        let moved = std::mem::take(&mut self.leaves_in[gone]);
        self.leaves_in[keep].extend(moved);
        self.live[gone] = false;
        self.slot_of_node[step.new_id] = keep;
        (keep, gone)
    }

    fn live_slots(&self) -> Vec<usize> {
        (0..self.live.len()).filter(|&s| self.live[s]).collect()
    }

    fn slot_of_leaf(&self) -> Vec<usize> {
        let mut out = vec![0; self.history.leaf_count];
        for s in self.live_slots() {
            for &leaf in &self.leaves_in[s] {
                out[leaf] = s;
            }
        }
        out
    }
}

/// Count, coordinate sum and sum of squared norms of a group of points.
#[derive(Clone)]
struct Moments {
    count: f64,
    sum: Array1<f64>,
    sumsq: f64,
}

impl Moments {
    fn sse(&self) -> f64 {
        if self.count == 0.0 {
            0.0
        } else {
            (self.sumsq - self.sum.dot(&self.sum) / self.count).max(0.0)
        }
    }

    fn absorb(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += &other.sum;
        self.sumsq += other.sumsq;
    }
}

fn leaf_moments(history: &MergeHistory, set: &EmbeddingSet) -> Result<Vec<Moments>> {
    if history.point_count != set.n() {
        return Err(Error::arg(format!(
            "hierarchy covers {} points, set has {}",
            history.point_count,
            set.n()
        )));
    }
    Ok(history
        .leaf_members
        .iter()
        .map(|members| {
            let mut m = Moments {
                count: members.len() as f64,
                sum: Array1::zeros(set.d()),
                sumsq: 0.0,
            };
            for &p in members {
                let row = set.row(p);
                m.sum += &row;
                m.sumsq += row.dot(&row);
            }
            m
        })
        .collect())
}

fn check_range(history: &MergeHistory, lo: usize, hi: usize) -> Result<()> {
    if lo == 0 || lo > hi || hi > history.leaf_count {
        return Err(Error::arg(format!(
            "k range [{lo}, {hi}] must lie within [1, {}]",
            history.leaf_count
        )));
    }
    Ok(())
}

/// Visits every cut with `lo <= k <= hi`, from fine to coarse, keeping
/// per-slot moments up to date.
fn walk_moments(history: &MergeHistory, set: &EmbeddingSet, lo: usize, hi: usize, mut f: impl FnMut(usize, &Walker, &[Moments])) -> Result<()> {
    check_range(history, lo, hi)?;
    let mut moments = leaf_moments(history, set)?;
    let mut w = Walker::new(history);
    loop {
        let k = w.k();
        if k <= hi {
            f(k, &w, &moments);
        }
        if k <= lo {
            break;
        }
        let (keep, gone) = w.merge();
        let absorbed = moments[gone].clone();
        moments[keep].absorb(&absorbed);
    }
    Ok(())
}

/// Within-cluster sum of squares of every cut in `[lo, hi]`.
pub fn inertia_by_k(history: &MergeHistory, set: &EmbeddingSet, lo: usize, hi: usize) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    walk_moments(history, set, lo, hi, |k, w, m| {
        out.insert(k, w.live_slots().iter().map(|&s| m[s].sse()).sum());
    })?;
    Ok(out)
}

/// Spherical-Gaussian BIC (higher is better) of every cut in `[lo, hi]`.
/// One shared variance is estimated as `SSE / (d (n - k))`.
pub fn bic_scores(history: &MergeHistory, set: &EmbeddingSet, lo: usize, hi: usize) -> Result<BTreeMap<usize, f64>> {
    let (r, m) = (set.n() as f64, set.d() as f64);
    let mut out = BTreeMap::new();
    walk_moments(history, set, lo, hi, |k, w, moments| {
        let slots = w.live_slots();
        let kf = k as f64;
        if r <= kf {
            return;
        }
        let sse: f64 = slots.iter().map(|&s| moments[s].sse()).sum();
        let var = (sse / (m * (r - kf))).max(f64::MIN_POSITIVE);
        let mixing: f64 = slots
            .iter()
            .map(|&s| {
                let c = moments[s].count;
                c * (c / r).ln()
            })
            .sum();
        let ll = mixing - r * m / 2.0 * (2.0 * std::f64::consts::PI * var).ln() - m * (r - kf) / 2.0;
        let params = kf * (m + 1.0);
        out.insert(k, ll - params / 2.0 * r.ln());
    })?;
    Ok(out)
}

/// Mean silhouette coefficient of every cut in `[lo, hi]` (singletons score 0).
pub fn silhouette_scores(history: &MergeHistory, set: &EmbeddingSet, lo: usize, hi: usize) -> Result<BTreeMap<usize, f64>> {
    check_range(history, lo, hi)?;
    let n = set.n();
    let l = history.leaf_count;
    if history.point_count != n {
        return Err(Error::arg(format!("hierarchy covers {} points, set has {n}", history.point_count)));
    }
    let point_leaf = history.point_leaves();
    // distance sums from every point to every slot
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = set.row(i);
            let mut sums = vec![0.0; l];
            for j in 0..n {
                let y = set.row(j);
                let d: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                sums[point_leaf[j]] += d;
            }
            sums
        })
        .collect();
    let mut dist = Array2::from_shape_vec((n, l), rows.into_iter().flatten().collect()).expect("n x l");
    let mut size: Vec<f64> = history.leaf_members.iter().map(|m| m.len() as f64).collect();
    let mut w = Walker::new(history);
    let mut out = BTreeMap::new();
    loop {
        let k = w.k();
        if k <= hi {
            let slots = w.live_slots();
            let slot_of_leaf = w.slot_of_leaf();
            let total: f64 = (0..n)
                .into_par_iter()
                .map(|i| {
                    let own = slot_of_leaf[point_leaf[i]];
                    if size[own] <= 1.0 {
                        return 0.0;
                    }
                    let a = dist[[i, own]] / (size[own] - 1.0);
                    let b = slots
                        .iter()
                        .filter(|&&s| s != own)
                        .map(|&s| dist[[i, s]] / size[s])
                        .fold(f64::INFINITY, f64::min);
                    if !b.is_finite() {
                        return 0.0;
                    }
                    let denom = a.max(b);
                    if denom == 0.0 {
                        0.0
                    } else {
                        (b - a) / denom
                    }
                })
                .sum();
            out.insert(k, total / n as f64);
        }
        if k <= lo {
            break;
        }
        let (keep, gone) = w.merge();
        for i in 0..n {
            let moved = dist[[i, gone]];
            dist[[i, keep]] += moved;
        }
        size[keep] += size[gone];
    }
    Ok(out)
}

/// k with the largest second difference `I(k-1) - 2 I(k) + I(k+1)`.
/// Only k with both neighbours present are candidates.
pub fn elbow_from_inertia(inertia: &BTreeMap<usize, f64>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&k, &ik) in inertia {
        let (Some(&prev), Some(&next)) = (k.checked_sub(1).and_then(|p| inertia.get(&p)), inertia.get(&(k + 1))) else {
            continue;
        };
        let second = prev - 2.0 * ik + next;
        if best.is_none_or(|(_, b)| second > b) {
            best = Some((k, second));
        }
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| Error::arg("elbow needs at least three consecutive k values"))
}

fn argmax(scores: &BTreeMap<usize, f64>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&k, &s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k).ok_or_else(|| Error::arg("no k in range to score"))
}

/// The baseline's choice of k within `[cfg.k_min, cfg.k_max]`.
pub fn baseline_select(history: &MergeHistory, set: &EmbeddingSet, method: Baseline, cfg: &GranularityConfig) -> Result<usize> {
    cfg.validate(history.leaf_count)?;
    let (lo, hi) = (cfg.k_min, cfg.k_max);
    match method {
        Baseline::Silhouette => argmax(&silhouette_scores(history, set, lo, hi)?),
        Baseline::Bic => argmax(&bic_scores(history, set, lo, hi)?),
        Baseline::Elbow => {
            let inertia = inertia_by_k(history, set, lo - 1, (hi + 1).min(history.leaf_count))?;
            elbow_from_inertia(&inertia)
        }
        Baseline::ClusterSize => {
            let min_size = cfg.size_threshold * set.n() as f64;
            let mut chosen = None;
            walk_moments(history, set, lo, hi, |k, w, m| {
                if chosen.is_none() && w.live_slots().iter().all(|&s| m[s].count >= min_size) {
                    chosen = Some(k);
                }
            })?;
            Ok(chosen.unwrap_or(lo))
        }
    }
}
