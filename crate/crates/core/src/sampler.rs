//! Triplet mining: entropy-ranked anchors, choices drawn from the anchor's
//! nearest clusters, and a uniform random baseline.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterModel, EntropyProfile, SoftAssignment};
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

/// Attempts allowed per requested triplet before sampling gives up.
pub const STALL_FACTOR: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletSource {
    Entropy,
    Random,
}

/// An anchor and two choices, in the order they are shown to the judge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub choice1: usize,
    pub choice2: usize,
    pub anchor_entropy: f64,
    pub source: TripletSource,
}

impl Triplet {
    fn key(&self) -> (usize, usize, usize) {
        (self.anchor, self.choice1.min(self.choice2), self.choice1.max(self.choice2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Fraction of highest-entropy instances kept as anchors.
    pub gamma: f64,
    /// Fraction of all clusters treated as an anchor's nearest clusters.
    pub nearest_fraction: f64,
    pub nearest_min: usize,
    pub budget: usize,
    /// Entropy-rank window `(lo, hi)` as fractions; replaces `gamma` when set.
    pub interval: Option<(f64, f64)>,
    pub shuffle_anchors: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            gamma: 0.20,
            nearest_fraction: 0.02,
            nearest_min: 2,
            budget: 1024,
            interval: None,
            shuffle_anchors: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::arg(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.nearest_min < 2 {
            return Err(Error::arg("nearest_min must be at least 2"));
        }
        if self.budget < 1 {
            return Err(Error::arg("budget must be at least 1"));
        }
        if !(self.nearest_fraction >= 0.0) {
            return Err(Error::arg("nearest_fraction must be non-negative"));
        }
        if let Some((lo, hi)) = self.interval {
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(Error::arg(format!("interval must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

/// Result of a sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSample {
    pub triplets: Vec<Triplet>,
    /// Set when the attempt limit was hit before the budget was filled.
    pub stalled: bool,
    pub attempts: usize,
}

fn ceil_fraction(fraction: f64, n: usize) -> usize {
    // guard against 0.2 * 10 = 2.0000000000000004
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Instances ordered by descending entropy (ascending index on ties), cut to
/// the top `gamma` fraction or to the `interval` window.
pub fn rank_anchors(profile: &EntropyProfile, cfg: &SamplerConfig, rng: &mut impl Rng) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = profile.len();
    if n == 0 {
        return Err(Error::arg("entropy profile is empty"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| profile.values[b].total_cmp(&profile.values[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = match cfg.interval {
        Some((lo, hi)) => {
            let start = (lo * n as f64).round() as usize;
            let end = ((hi * n as f64).round() as usize).min(n);
            if start >= end {
                return Err(Error::arg(format!("entropy window ({lo}, {hi}) is empty for {n} instances")));
            }
            order[start..end].to_vec()
        }
        None => {
            let keep = ceil_fraction(cfg.gamma, n).clamp(1, n);
            order.truncate(keep);
            order
        }
    };
    if cfg.shuffle_anchors {
        kept.shuffle(rng);
    }
    Ok(kept)
}

/// Number of nearest clusters considered for each anchor.
pub fn nearest_count(k: usize, cfg: &SamplerConfig) -> usize {
    cfg.nearest_min.max(ceil_fraction(cfg.nearest_fraction, k)).min(k)
}

/// The anchor's nearest clusters by descending soft-assignment probability;
/// its own cluster is always included.
pub fn nearest_clusters(anchor: usize, model: &ClusterModel, soft: &SoftAssignment, cfg: &SamplerConfig) -> Result<Vec<usize>> {
    if model.k < 2 {
        return Err(Error::arg("need at least two clusters to form candidate pools"));
    }
    let own = *model
        .assignments
        .get(anchor)
        .ok_or_else(|| Error::arg(format!("instance {anchor} is not assigned")))?;
    let m = nearest_count(model.k, cfg);
    let row = soft.probs.row(anchor);
    let mut order: Vec<usize> = (0..model.k).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    order.truncate(m);
    if !order.contains(&own) {
        order[m - 1] = own;
    }
    Ok(order)
}

fn pick_excluding(members: &[usize], exclude: usize, rng: &mut impl Rng) -> Option<usize> {
    let skip = members.binary_search(&exclude).ok();
    let len = members.len() - usize::from(skip.is_some());
    if len == 0 {
        return None;
    }
    let mut r = rng.random_range(0..len);
    if let Some(pos) = skip {
        if r >= pos {
            r += 1;
        }
    }
    Some(members[r])
}

/// Entropy-based triplet sampling.
///
/// Draw order from the single seeded stream: optional anchor shuffle, then per
/// attempt the two cluster picks, one instance per cluster, and the
/// presentation-order coin.
pub fn sample_triplets(
    set: &EmbeddingSet,
    model: &ClusterModel,
    soft: &SoftAssignment,
    profile: &EntropyProfile,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<TripletSample> {
    cfg.validate()?;
    if model.assignments.len() != set.n() || soft.probs.nrows() != set.n() || profile.len() != set.n() {
        return Err(Error::arg("model, soft assignment and entropy profile must cover the same instances"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchors = rank_anchors(profile, cfg, &mut rng)?;
    let members = model.members();
    let mut nearest: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut seen = HashSet::new();
    let mut triplets = Vec::with_capacity(cfg.budget);
    let limit = cfg.budget.saturating_mul(STALL_FACTOR);
    let mut attempts = 0;
    while triplets.len() < cfg.budget && attempts < limit {
        let anchor = anchors[attempts % anchors.len()];
        attempts += 1;
        let pool = match nearest.get(&anchor) {
            Some(p) => p,
            None => {
                let p = nearest_clusters(anchor, model, soft, cfg)?;
                nearest.entry(anchor).or_insert(p)
            }
        };
        let picks = index::sample(&mut rng, pool.len(), 2);
        let (ca, cb) = (pool[picks.index(0)], pool[picks.index(1)]);
        let Some(a) = pick_excluding(&members[ca], anchor, &mut rng) else { continue };
        let Some(b) = pick_excluding(&members[cb], anchor, &mut rng) else { continue };
        let (c1, c2) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
        let t = Triplet {
            anchor,
            choice1: c1,
            choice2: c2,
            anchor_entropy: profile.values[anchor],
            source: TripletSource::Entropy,
        };
        if seen.insert(t.key()) {
            triplets.push(t);
        }
    }
    let stalled = triplets.len() < cfg.budget;
    if stalled {
        warn!("triplet sampling stalled after {attempts} attempts with {} of {} triplets", triplets.len(), cfg.budget);
    }
    Ok(TripletSample {
        triplets,
        stalled,
        attempts,
    })
}

/// Uniform random triplets: three distinct instances, deduplicated.
/// Entropies are zero until filled by [`annotate_entropy`].
pub fn sample_random_triplets(set: &EmbeddingSet, budget: usize, seed: u64) -> Result<TripletSample> {
    let n = set.n();
    if n < 3 {
        return Err(Error::arg(format!("random triplets need at least 3 instances, got {n}")));
    }
    if budget < 1 {
        return Err(Error::arg("budget must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut triplets = Vec::with_capacity(budget);
    let limit = budget.saturating_mul(STALL_FACTOR);
    let mut attempts = 0;
    while triplets.len() < budget && attempts < limit {
        attempts += 1;
        let ids = index::sample(&mut rng, n, 3);
        let t = Triplet {
            anchor: ids.index(0),
            choice1: ids.index(1),
            choice2: ids.index(2),
            anchor_entropy: 0.0,
            source: TripletSource::Random,
        };
        if seen.insert(t.key()) {
            triplets.push(t);
        }
    }
    Ok(TripletSample {
        stalled: triplets.len() < budget,
        triplets,
        attempts,
    })
}

pub fn annotate_entropy(triplets: &mut [Triplet], profile: &EntropyProfile) {
    for t in triplets {
        t.anchor_entropy = profile.values[t.anchor];
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TripletRecord {
    anchor: String,
    c1: String,
    c2: String,
    entropy: f64,
    source: TripletSource,
}

pub fn write_triplets(path: impl AsRef<Path>, triplets: &[Triplet], set: &EmbeddingSet) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in triplets {
        let rec = TripletRecord {
            anchor: set.id(t.anchor).to_string(),
            c1: set.id(t.choice1).to_string(),
            c2: set.id(t.choice2).to_string(),
            entropy: t.anchor_entropy,
            source: t.source,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_triplets(path: impl AsRef<Path>, set: &EmbeddingSet) -> Result<Vec<Triplet>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TripletRecord =
            serde_json::from_str(&line).map_err(|e| Error::load(&ctx, format!("line {}: {e}", lineno + 1)))?;
        let idx = |id: &str| {
            set.index_of(id)
                .ok_or_else(|| Error::load(&ctx, format!("line {}: unknown id {id:?}", lineno + 1)))
        };
        let t = Triplet {
            anchor: idx(&rec.anchor)?,
            choice1: idx(&rec.c1)?,
            choice2: idx(&rec.c2)?,
            anchor_entropy: rec.entropy,
            source: rec.source,
        };
        if t.anchor == t.choice1 || t.anchor == t.choice2 || t.choice1 == t.choice2 {
            return Err(Error::load(&ctx, format!("line {}: triplet ids must be distinct", lineno + 1)));
        }
        out.push(t);
    }
    Ok(out)
}
