//! Choosing the number of clusters: pairs drawn from the merge steps of a
//! hierarchy are judged as same/different, and every cut is scored by how
//! well its same-cluster indicator agrees with those verdicts.

mod baselines;

pub use baselines::{baseline_select, bic_scores, elbow_from_inertia, inertia_by_k, silhouette_scores, Baseline};

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::MergeHistory;
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};
use crate::oracle::{Demo, PairJudgment, PairVerdict};

/// Which side of the agreement score is treated as the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Judge verdicts are the reference, hierarchy labels the prediction.
    #[default]
    JudgeReference,
    /// Hierarchy labels are the reference (precision and recall swap).
    HierarchyReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GranularityConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Pairs drawn per merge step.
    pub lambda: usize,
    pub beta: f64,
    pub orientation: Orientation,
    /// Smallest allowed cluster, as a fraction of n, for the cluster-size baseline.
    pub size_threshold: f64,
    pub seed: u64,
}

impl Default for GranularityConfig {
    fn default() -> Self {
        GranularityConfig {
            k_min: 2,
            k_max: 200,
            lambda: 1,
            beta: 0.92,
            orientation: Orientation::JudgeReference,
            size_threshold: 0.005,
            seed: 0,
        }
    }
}

impl GranularityConfig {
    pub fn validate(&self, leaf_count: usize) -> Result<()> {
        if self.k_min < 2 || self.k_min >= self.k_max {
            return Err(Error::arg(format!("need 2 <= k_min < k_max, got k_min={} k_max={}", self.k_min, self.k_max)));
        }
        if self.k_max > leaf_count {
            return Err(Error::arg(format!(
                "k_max={} exceeds the hierarchy's {leaf_count} leaves",
                self.k_max
            )));
        }
        if self.lambda == 0 {
            return Err(Error::arg("lambda must be at least 1"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::arg("beta must be positive"));
        }
        Ok(())
    }
}

/// A pair of points taken from the two clusters joined at one merge step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepPair {
    pub pair: (usize, usize),
    /// Cluster count right after the merge the pair was drawn from.
    pub step_k: usize,
    /// Node ids of the clusters `pair.0` and `pair.1` came from.
    pub sides: (usize, usize),
}

/// Draws `lambda` pairs from every merge whose resulting cluster count lies
/// in `[k_min, k_max)`. Draws are independent; repeats within a step are dropped.
pub fn sample_step_pairs(history: &MergeHistory, cfg: &GranularityConfig) -> Result<Vec<StepPair>> {
    cfg.validate(history.leaf_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    history.for_each_merge(|step, left, right| {
        if step.resulting_k < cfg.k_min || step.resulting_k >= cfg.k_max {
            return;
        }
        let mut seen = HashSet::new();
        for _ in 0..cfg.lambda {
            let a = *left.choose(&mut rng).expect("clusters are non-empty");
            let b = *right.choose(&mut rng).expect("clusters are non-empty");
            if seen.insert((a, b)) {
                out.push(StepPair {
                    pair: (a, b),
                    step_k: step.resulting_k,
                    sides: (step.left, step.right),
                });
            }
        }
    });
    Ok(out)
}

/// Cluster count at which each pair first shares a cluster.
pub fn join_levels(history: &MergeHistory, pairs: &[(usize, usize)]) -> Result<Vec<usize>> {
    let leaves = history.point_leaves();
    let parents = history.parents();
    let leaf = |p: usize| {
        leaves
            .get(p)
            .copied()
            .filter(|&l| l != usize::MAX)
            .ok_or_else(|| Error::arg(format!("point {p} is not covered by the hierarchy")))
    };
    pairs
        .iter()
        .map(|&(a, b)| Ok(history.join_level_with(&parents, leaf(a)?, leaf(b)?)))
        .collect()
}

/// Whether each pair falls in one cluster of the `k`-cluster cut.
pub fn hierarchy_labels(history: &MergeHistory, pairs: &[(usize, usize)], k: usize) -> Result<Vec<bool>> {
    if k == 0 || k > history.leaf_count {
        return Err(Error::arg(format!("k must be in 1..={}, got {k}", history.leaf_count)));
    }
    Ok(join_levels(history, pairs)?.into_iter().map(|j| k <= j).collect())
}

/// F-beta of "same" verdicts: `(1 + b^2) P R / (b^2 P + R)`, or 0 when undefined.
pub fn fbeta(tp: usize, fp: usize, fneg: usize, beta: f64) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fneg) as f64;
    let b2 = beta * beta;
    let denom = b2 * p + r;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / denom
    }
}

fn agreement(judged: &[bool], hierarchy: impl Iterator<Item = bool>, beta: f64, orientation: Orientation) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (&w, h) in judged.iter().zip(hierarchy) {
        match (w, h) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            (false, false) => {}
        }
    }
    match orientation {
        Orientation::JudgeReference => fbeta(tp, fp, fneg, beta),
        Orientation::HierarchyReference => fbeta(tp, fneg, fp, beta),
    }
}

/// Agreement between judge verdicts and hierarchy labels. Ambiguous verdicts
/// are dropped together with their labels.
pub fn consistency_fbeta(predictions: &[PairJudgment], labels_at_k: &[bool], beta: f64, orientation: Orientation) -> Result<f64> {
    if predictions.len() != labels_at_k.len() {
        return Err(Error::arg(format!(
            "{} judgments but {} hierarchy labels",
            predictions.len(),
            labels_at_k.len()
        )));
    }
    let (judged, labels): (Vec<bool>, Vec<bool>) = predictions
        .iter()
        .zip(labels_at_k)
        .filter(|(p, _)| p.verdict != PairVerdict::Ambiguous)
        .map(|(p, &l)| (p.verdict == PairVerdict::Same, l))
        .unzip();
    Ok(agreement(&judged, labels.into_iter(), beta, orientation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityDecision {
    pub k_star: usize,
    /// Score of every k in `[k_min, k_max]`.
    pub scores: BTreeMap<usize, f64>,
    pub judged: usize,
    pub ambiguous: usize,
    pub config: GranularityConfig,
}

/// Scores every cut in `[k_min, k_max]` and keeps the best (smallest k on ties).
pub fn choose_granularity(history: &MergeHistory, judgments: &[PairJudgment], cfg: &GranularityConfig) -> Result<GranularityDecision> {
    cfg.validate(history.leaf_count)?;
    let usable: Vec<&PairJudgment> = judgments.iter().filter(|j| j.verdict != PairVerdict::Ambiguous).collect();
    if usable.is_empty() {
        return Err(Error::arg("no usable pair judgments"));
    }
    let pairs: Vec<(usize, usize)> = usable.iter().map(|j| j.pair).collect();
    let levels = join_levels(history, &pairs)?;
    let judged: Vec<bool> = usable.iter().map(|j| j.verdict == PairVerdict::Same).collect();
    let scores: BTreeMap<usize, f64> = (cfg.k_min..=cfg.k_max)
        .into_par_iter()
        .map(|k| (k, agreement(&judged, levels.iter().map(|&j| k <= j), cfg.beta, cfg.orientation)))
        .collect();
    let mut k_star = cfg.k_min;
    for (&k, &s) in &scores {
        if s > scores[&k_star] {
            k_star = k;
        }
    }
    Ok(GranularityDecision {
        k_star,
        scores,
        judged: usable.len(),
        ambiguous: judgments.len() - usable.len(),
        config: cfg.clone(),
    })
}

/// Picks `positives` same and `negatives` different pairs as prompt
/// demonstrations, using each judgment's verdict as its annotation.
pub fn select_demos(judged: &[PairJudgment], set: &EmbeddingSet, positives: usize, negatives: usize, seed: u64) -> Result<Vec<Demo>> {
    let texts = set
        .texts()
        .ok_or_else(|| Error::arg("demonstrations need texts"))?;
    let pos: Vec<&PairJudgment> = judged.iter().filter(|j| j.verdict == PairVerdict::Same).collect();
    let neg: Vec<&PairJudgment> = judged.iter().filter(|j| j.verdict == PairVerdict::Different).collect();
    if pos.len() < positives || neg.len() < negatives {
        return Err(Error::arg(format!(
            "need {positives} same and {negatives} different pairs, have {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<&PairJudgment> = pos.choose_multiple(&mut rng, positives).copied().collect();
    picked.extend(neg.choose_multiple(&mut rng, negatives).copied());
    // seeded order so the prompt does not list all positives first
    picked.shuffle(&mut rng);
    Ok(picked
        .into_iter()
        .map(|j| Demo {
            sentence1: texts[j.pair.0].clone(),
            sentence2: texts[j.pair.1].clone(),
            same: j.verdict == PairVerdict::Same,
            rationale: String::new(),
        })
        .collect())
}
