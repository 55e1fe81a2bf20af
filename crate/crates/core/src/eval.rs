//! Clustering accuracy after Hungarian matching, NMI, the multi-seed K-means
//! protocol, triplet accuracy and granularity error.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::kmeans;
use crate::corpus::{EmbeddingSet, Labels};
use crate::error::{Error, Result};
use crate::oracle::TripletJudgment;
use crate::sampler::Triplet;

/// Seeds used by the standard five-run protocol.
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn dense(values: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = values
        .iter()
        .map(|v| {
            let next = map.len();
            *map.entry(*v).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn contingency(pred: &[usize], gt: &[usize]) -> Result<(Vec<Vec<usize>>, usize, usize)> {
    if pred.len() != gt.len() {
        return Err(Error::arg(format!("{} predictions but {} labels", pred.len(), gt.len())));
    }
    let (p, kp) = dense(pred);
    let (g, kg) = dense(gt);
    let mut table = vec![vec![0usize; kg]; kp];
    for (a, b) in p.iter().zip(&g) {
        table[*a][*b] += 1;
    }
    Ok((table, kp, kg))
}

/// Minimum-cost perfect matching on a square matrix; returns the column
/// assigned to each row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // potentials and matching, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Fraction of points whose predicted cluster maps to their label under the
/// best one-to-one matching of clusters to labels.
pub fn hungarian_accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::arg("accuracy of an empty labeling"));
    }
    let (table, kp, kg) = contingency(pred, gt)?;
    let size = kp.max(kg);
    let top = *table.iter().flatten().max().unwrap_or(&0) as f64;
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| top - table.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0) as f64)
                .collect()
        })
        .collect();
    let matched: usize = min_cost_assignment(&cost)
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < kp && j < kg)
        .map(|(i, j)| table[i][j])
        .sum();
    Ok(matched as f64 / pred.len() as f64)
}

fn entropy_of(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies.
/// Two single-cluster labelings score 1.
pub fn nmi(pred: &[usize], gt: &[usize]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::arg("nmi of an empty labeling"));
    }
    let (table, _, kg) = contingency(pred, gt)?;
    let n = pred.len() as f64;
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..kg).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let (hp, hg) = (entropy_of(rows.iter().copied(), n), entropy_of(cols.iter().copied(), n));
    if hp == 0.0 && hg == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / ((hp + hg) / 2.0)).clamp(0.0, 1.0))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub seeds: Vec<u64>,
    pub accuracy: Vec<f64>,
    pub nmi: Vec<f64>,
    pub accuracy_mean: f64,
    /// Population standard deviation over seeds.
    pub accuracy_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
}

impl EvalReport {
    pub fn from_runs(k: usize, seeds: Vec<u64>, accuracy: Vec<f64>, nmi: Vec<f64>) -> Self {
        let (accuracy_mean, accuracy_std) = mean_std(&accuracy);
        let (nmi_mean, nmi_std) = mean_std(&nmi);
        EvalReport {
            k,
            seeds,
            accuracy,
            nmi,
            accuracy_mean,
            accuracy_std,
            nmi_mean,
            nmi_std,
        }
    }

    /// Accuracy in percent as `mean (std)`, e.g. `64.49 (1.52)`.
    pub fn accuracy_cell(&self) -> String {
        format!("{:.2} ({:.2})", 100.0 * self.accuracy_mean, 100.0 * self.accuracy_std)
    }

    pub fn nmi_cell(&self) -> String {
        format!("{:.2} ({:.2})", 100.0 * self.nmi_mean, 100.0 * self.nmi_std)
    }
}

/// Fixed-width table with one row per named report.
pub fn format_table(rows: &[(&str, &EvalReport)]) -> String {
    let width = rows.iter().map(|(name, _)| name.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<width$}  {:>5}  {:>16}  {:>16}\n", "method", "k", "accuracy", "nmi");
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>5}  {:>16}  {:>16}\n",
            name,
            r.k,
            r.accuracy_cell(),
            r.nmi_cell()
        ));
    }
    out
}

/// K-means at `k` (the number of label classes when `None`) once per seed,
/// scored against the set's labels.
pub fn evaluate_kmeans(set: &EmbeddingSet, k: Option<usize>, seeds: &[u64]) -> Result<EvalReport> {
    let labels = set
        .labels()
        .ok_or_else(|| Error::arg("evaluation needs ground-truth labels"))?;
    if seeds.is_empty() {
        return Err(Error::arg("at least one seed is required"));
    }
    let k = k.unwrap_or(labels.num_classes());
    let runs: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let model = kmeans(set, k, seed)?;
            Ok((
                hungarian_accuracy(&model.assignments, labels.values())?,
                nmi(&model.assignments, labels.values())?,
            ))
        })
        .collect::<Result<_>>()?;
    let (acc, nm) = runs.into_iter().unzip();
    Ok(EvalReport::from_runs(k, seeds.to_vec(), acc, nm))
}

/// The choice sharing the anchor's label when exactly one of them does.
pub fn ground_truth_positive(triplet: &Triplet, labels: &Labels) -> Option<usize> {
    let a = labels.get(triplet.anchor);
    match (labels.get(triplet.choice1) == a, labels.get(triplet.choice2) == a) {
        (true, false) => Some(triplet.choice1),
        (false, true) => Some(triplet.choice2),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletAccuracy {
    /// Share of triplets with a single label-positive choice where the judge picked it.
    /// `None` when there are no such triplets.
    pub judge: Option<f64>,
    /// Same, for the choice closer to the anchor in Euclidean distance.
    pub embedding: Option<f64>,
    pub gt_count: usize,
}

/// Triplet accuracy of the judge and of the embedding space, over triplets
/// with exactly one label-positive choice. Ambiguous verdicts count as wrong.
pub fn triplet_accuracy(judgments: &[TripletJudgment], set: &EmbeddingSet) -> Result<TripletAccuracy> {
    let labels = set
        .labels()
        .ok_or_else(|| Error::arg("triplet accuracy needs ground-truth labels"))?;
    let dist = |a: usize, b: usize| {
        let (x, y) = (set.row(a), set.row(b));
        x.iter().zip(y.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
    };
    let (mut count, mut judge_ok, mut embed_ok) = (0usize, 0usize, 0usize);
    for j in judgments {
        let t = &j.triplet;
        let Some(pos) = ground_truth_positive(t, labels) else {
            continue;
        };
        count += 1;
        if j.oriented().is_some_and(|(_, p, _)| p == pos) {
            judge_ok += 1;
        }
        let closer = if dist(t.anchor, t.choice1) <= dist(t.anchor, t.choice2) { t.choice1 } else { t.choice2 };
        if closer == pos {
            embed_ok += 1;
        }
    }
    let share = |ok: usize| (count > 0).then(|| ok as f64 / count as f64);
    Ok(TripletAccuracy {
        judge: share(judge_ok),
        embedding: share(embed_ok),
        gt_count: count,
    })
}

/// Number of triplets with exactly one label-positive choice.
pub fn gt_triplet_count(triplets: &[Triplet], labels: &Labels) -> usize {
    triplets.iter().filter(|t| ground_truth_positive(t, labels).is_some()).count()
}

/// Relative error of a chosen cluster count, in percent.
pub fn granularity_error(k_star: usize, k_gt: usize) -> f64 {
    100.0 * (k_star as f64 - k_gt as f64).abs() / k_gt as f64
}
