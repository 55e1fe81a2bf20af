//! End-to-end runs: ingest, cluster, sample, judge, fine-tune (repeated for
//! each iteration), then hierarchy, granularity and evaluation. Every stage
//! writes its artifacts under the run directory and records their hashes in
//! `manifest.json`, so an interrupted run can resume where it stopped.

mod report;
mod run;

pub use report::report;
pub use run::{run_pipeline, Evaluation, GranularityEval, GranularityOutcome, Manifest, RunOptions, StageRecord, TripletEval, MANIFEST};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapter::TrainConfig;
use crate::cluster::{agglomerative, kmeans, minibatch_kmeans, ClusterModel, Linkage, MiniBatchParams, Stop};
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};
use crate::granularity::{Baseline, GranularityConfig};
use crate::oracle::{estimate_cost, CostEstimate, JudgeConfig, PromptSpec, PAIR_TOKENS, TRIPLET_TOKENS};
use crate::sampler::SamplerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    Kmeans,
    MinibatchKmeans,
    Agglomerative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub method: ClusterMethod,
    /// Cluster count for the K-means methods, or the agglomerative target when
    /// no `max_distance` is given.
    pub k: usize,
    pub batch: usize,
    pub iters: usize,
    pub linkage: Linkage,
    pub max_distance: Option<f64>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            method: ClusterMethod::MinibatchKmeans,
            k: 100,
            batch: 1024,
            iters: 100,
            linkage: Linkage::Ward,
            max_distance: None,
        }
    }
}

/// Clusters `set` as configured.
pub fn cluster_set(set: &EmbeddingSet, cfg: &ClusterConfig, seed: u64) -> Result<ClusterModel> {
    match cfg.method {
        ClusterMethod::Kmeans => kmeans(set, cfg.k, seed),
        ClusterMethod::MinibatchKmeans => minibatch_kmeans(
            set,
            MiniBatchParams {
                k: cfg.k,
                batch: cfg.batch,
                iters: cfg.iters,
            },
            seed,
        ),
        ClusterMethod::Agglomerative => {
            let stop = match cfg.max_distance {
                Some(t) => Stop::MaxDistance(t),
                None => Stop::TargetK(cfg.k),
            };
            Ok(agglomerative(set, cfg.linkage, stop)?.0)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    /// Learn `x + xW + b` instead of `xW + b` (square only).
    pub residual: bool,
    /// Output dimension; the input dimension when unset.
    pub d_out: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    /// Mini-batch K-means down to this many clusters before Ward merging.
    /// `None` runs Ward directly over all points.
    pub k_start: Option<usize>,
    /// Standardize the refined embeddings before building the hierarchy.
    pub standardize: bool,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            k_start: Some(200),
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub enabled: bool,
    pub seeds: Vec<u64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            enabled: true,
            seeds: crate::eval::DEFAULT_SEEDS.to_vec(),
        }
    }
}

/// Everything a run needs. Per-stage seeds are derived from `seed` and
/// override the `seed` fields of the nested configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input embeddings (`<stem>` or `<stem>.emb`).
    pub embeddings: PathBuf,
    pub workdir: PathBuf,
    pub seed: u64,
    pub iterations: usize,
    /// Standardize the input embeddings at ingest.
    pub standardize: bool,
    pub cluster: ClusterConfig,
    /// Degrees of freedom of the Student's-t kernel.
    pub alpha: f64,
    pub sampler: SamplerConfig,
    pub prompt: PromptSpec,
    pub judge: JudgeConfig,
    /// Judge for the pairwise questions; `judge` when unset.
    pub pair_judge: Option<JudgeConfig>,
    pub train: TrainConfig,
    pub adapter: AdapterConfig,
    pub hierarchy: HierarchyConfig,
    /// `None` skips the hierarchy and granularity stages.
    pub granularity: Option<GranularityConfig>,
    pub baselines: Vec<Baseline>,
    pub evaluation: EvaluationConfig,
    pub price_per_1k_tokens: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            embeddings: PathBuf::new(),
            workdir: PathBuf::from("run"),
            seed: 0,
            iterations: 1,
            standardize: true,
            cluster: ClusterConfig::default(),
            alpha: 1.0,
            sampler: SamplerConfig::default(),
            prompt: PromptSpec::default(),
            judge: JudgeConfig::default(),
            pair_judge: None,
            train: TrainConfig::default(),
            adapter: AdapterConfig::default(),
            hierarchy: HierarchyConfig::default(),
            granularity: Some(GranularityConfig::default()),
            baselines: vec![Baseline::Silhouette, Baseline::Elbow, Baseline::Bic, Baseline::ClusterSize],
            evaluation: EvaluationConfig::default(),
            price_per_1k_tokens: 0.002,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::load(path.display().to_string(), e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.embeddings.as_os_str().is_empty() {
            return Err(Error::arg("no input embeddings given"));
        }
        if self.iterations == 0 {
            return Err(Error::arg("iterations must be at least 1"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::arg("alpha must be positive"));
        }
        self.sampler.validate()?;
        self.judge.validate()?;
        if let Some(p) = &self.pair_judge {
            p.validate()?;
        }
        self.train.validate()?;
        if self.evaluation.enabled && self.evaluation.seeds.is_empty() {
            return Err(Error::arg("evaluation needs at least one seed"));
        }
        if self.adapter.residual && self.adapter.d_out.is_some() {
            return Err(Error::arg("a residual adapter keeps the input dimension"));
        }
        Ok(())
    }

    pub fn pair_judge(&self) -> &JudgeConfig {
        self.pair_judge.as_ref().unwrap_or(&self.judge)
    }

    /// Hash of the settings that affect results; paths are left out so the
    /// same run in another directory hashes the same.
    pub fn fingerprint(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("workdir");
            obj.remove("embeddings");
            for key in ["judge", "pair_judge"] {
                if let Some(j) = obj.get_mut(key).and_then(|j| j.as_object_mut()) {
                    j.remove("cache_path");
                }
            }
        }
        Ok(sha256_hex(serde_json::to_string(&value)?.as_bytes()))
    }

    /// Upper bound on judge queries and their price, from the budget alone.
    pub fn cost_estimate(&self) -> CostEstimate {
        let triplets = self.sampler.budget * self.iterations;
        let pairs = self
            .granularity
            .as_ref()
            .map_or(0, |g| g.lambda * g.k_max.saturating_sub(g.k_min));
        let t = estimate_cost(triplets, 0, self.price_per_1k_tokens, TRIPLET_TOKENS);
        let p = estimate_cost(0, pairs, self.price_per_1k_tokens, PAIR_TOKENS);
        CostEstimate {
            queries: t.queries + p.queries,
            tokens: t.tokens + p.tokens,
            dollars: t.dollars + p.dollars,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
