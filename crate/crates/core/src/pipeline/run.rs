use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{cluster_set, sha256_hex, RunConfig};
use crate::adapter::{apply_adapter, load_adapter, save_adapter, train, AdapterModel, TrainConfig};
use crate::cluster::{agglomerative, entropy, soft_assign, two_step_hierarchy, ClusterModel, Linkage, MergeHistory, Stop};
use crate::corpus::{load_embedding_set, matrix_path, meta_path, save_embedding_set, standardize, EmbeddingSet};
use crate::error::{Error, Result};
use crate::eval::{evaluate_kmeans, granularity_error, triplet_accuracy, EvalReport, TripletAccuracy};
use crate::granularity::{baseline_select, choose_granularity, sample_step_pairs, GranularityConfig, GranularityDecision};
use crate::oracle::{
    read_triplet_judgments, write_pair_judgments, write_triplet_judgments, ChatTransport, CostEstimate, Judge, JudgeConfig, JudgeKind, JudgeStats,
    TripletJudgment,
};
use crate::sampler::{read_triplets, sample_triplets, write_triplets, Triplet};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Reuse stages whose recorded artifacts are still on disk and unchanged.
    pub resume: bool,
    /// Transport for remote judges in place of HTTP.
    pub transport: Option<Arc<dyn ChatTransport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    /// Artifact path relative to the run directory, with its SHA-256.
    pub artifacts: BTreeMap<String, String>,
    pub stats: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub input_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub stages: Vec<StageRecord>,
    pub skipped: Vec<String>,
    /// Judge counters summed over all judging stages.
    pub judge_stats: JudgeStats,
    pub cost_estimate: CostEstimate,
    pub complete: bool,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        read_json(&dir.as_ref().join(MANIFEST))
    }

    pub fn stage(&self, name: &str, iteration: Option<usize>) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name && s.iteration == iteration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityOutcome {
    pub decision: GranularityDecision,
    pub pairs: usize,
    /// Each baseline's choice of k.
    pub baselines: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletEval {
    pub iteration: usize,
    /// Measured in the space the triplets were sampled from.
    pub before: TripletAccuracy,
    /// Measured in the refined space of the same iteration.
    pub after: TripletAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityEval {
    pub k_true: usize,
    pub k_star: usize,
    pub error: f64,
    pub baseline_errors: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub base: EvalReport,
    /// One report per iteration.
    pub refined: Vec<EvalReport>,
    pub triplets: Vec<TripletEval>,
    pub granularity: Option<GranularityEval>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::load(path.display().to_string(), e.to_string()))
}

fn hash_file(path: &Path) -> Result<String> {
    fs::read(path).map(|b| sha256_hex(&b)).map_err(|e| Error::io(path, e))
}

fn input_hash(path: &Path) -> Result<String> {
    let both = hash_file(&matrix_path(path))? + &hash_file(&meta_path(path))?;
    Ok(sha256_hex(both.as_bytes()))
}

fn add_stats(total: &mut JudgeStats, s: &JudgeStats) {
    total.queries += s.queries;
    total.cache_hits += s.cache_hits;
    total.remote_calls += s.remote_calls;
    total.ambiguous += s.ambiguous;
    total.transport_failures += s.transport_failures;
}

fn build_judge(cfg: JudgeConfig, transport: &Option<Arc<dyn ChatTransport>>) -> Result<Judge> {
    match (cfg.kind, transport) {
        (JudgeKind::Remote, Some(t)) => Judge::with_transport(cfg, t.clone()),
        _ => Judge::new(cfg),
    }
}

/// A judging stage fails outright when not a single query got an answer.
fn check_transport<'a>(errors: impl ExactSizeIterator<Item = &'a Option<String>>) -> Result<()> {
    let total = errors.len();
    let mut first = None;
    let mut failed = 0;
    for e in errors.flatten() {
        failed += 1;
        first.get_or_insert(e);
    }
    match first {
        Some(e) if failed == total => Err(Error::Transport(format!("all {total} queries failed; first: {e}"))),
        _ => Ok(()),
    }
}

struct Runner {
    dir: PathBuf,
    manifest: Manifest,
    previous: Option<Manifest>,
    reuse: bool,
}

impl Runner {
    fn reusable(&mut self, stage: &str, iteration: Option<usize>) -> Option<StageRecord> {
        if !self.reuse {
            return None;
        }
        let idx = self.manifest.stages.len();
        let rec = self
            .previous
            .as_ref()
            .and_then(|m| m.stages.get(idx))
            .filter(|r| r.stage == stage && r.iteration == iteration)
            .filter(|r| r.artifacts.iter().all(|(p, h)| hash_file(&self.dir.join(p)).ok().as_ref() == Some(h)))
            .cloned();
        if rec.is_none() {
            self.reuse = false;
        }
        rec
    }

    /// Runs `compute` (which writes `artifacts`) or, when resuming, loads the
    /// previous result with `load`.
    fn stage<T>(
        &mut self,
        stage: &str,
        iteration: Option<usize>,
        artifacts: &[String],
        compute: impl FnOnce(&Path) -> Result<(T, Value)>,
        load: impl FnOnce(&Path) -> Result<T>,
    ) -> Result<T> {
        let first = self.dir.join(&artifacts[0]);
        let wrap = |e: Error| Error::Stage {
            stage: stage.to_string(),
            path: first.clone(),
            source: Box::new(e),
        };
        if let Some(rec) = self.reusable(stage, iteration) {
            info!("{stage}: reusing {}", first.display());
            let value = load(&self.dir).map_err(wrap)?;
            self.push(rec)?;
            return Ok(value);
        }
        info!("{stage}: writing {}", first.display());
        if let Some(parent) = first.parent() {
            fs::create_dir_all(parent).map_err(|e| wrap(Error::io(parent, e)))?;
        }
        let (value, stats) = compute(&self.dir).map_err(wrap)?;
        let mut hashes = BTreeMap::new();
        for a in artifacts {
            hashes.insert(a.clone(), hash_file(&self.dir.join(a)).map_err(wrap)?);
        }
        self.push(StageRecord {
            stage: stage.to_string(),
            iteration,
            artifacts: hashes,
            stats,
        })?;
        Ok(value)
    }

    fn push(&mut self, rec: StageRecord) -> Result<()> {
        if let Some(s) = rec.stats.get("judge").and_then(|v| serde_json::from_value::<JudgeStats>(v.clone()).ok()) {
            add_stats(&mut self.manifest.judge_stats, &s);
        }
        self.manifest.stages.push(rec);
        self.save()
    }

    fn save(&self) -> Result<()> {
        write_json(&self.dir.join(MANIFEST), &self.manifest)
    }
}

fn seeds_for(cfg: &RunConfig) -> BTreeMap<String, u64> {
    let mut seeds = BTreeMap::new();
    for it in 1..=cfg.iterations {
        for (i, name) in ["cluster", "sample", "judge", "finetune"].iter().enumerate() {
            seeds.insert(format!("{name}-{it}"), cfg.seed.wrapping_add((100 * it + i) as u64));
        }
    }
    for (i, name) in ["hierarchy", "pairs", "pair_judge"].iter().enumerate() {
        seeds.insert(name.to_string(), cfg.seed.wrapping_add(10 + i as u64));
    }
    seeds
}

fn initial_adapter(cfg: &RunConfig, d: usize) -> AdapterModel {
    if cfg.adapter.residual {
        AdapterModel::residual(d)
    } else {
        AdapterModel::identity(d, cfg.adapter.d_out.unwrap_or(d))
    }
}

/// Runs (or resumes) every stage and returns the final manifest.
pub fn run_pipeline(cfg: &RunConfig, opts: &RunOptions) -> Result<Manifest> {
    cfg.validate()?;
    let dir = cfg.workdir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let config_sha256 = cfg.fingerprint()?;
    let input_sha256 = input_hash(&cfg.embeddings)?;
    let previous = if opts.resume {
        Manifest::load(&dir)
            .ok()
            .filter(|m| m.config_sha256 == config_sha256 && m.input_sha256 == input_sha256)
    } else {
        None
    };
    let seeds = seeds_for(cfg);
    let mut r = Runner {
        dir,
        reuse: previous.is_some(),
        previous,
        manifest: Manifest {
            config_sha256,
            input_sha256,
            seeds: seeds.clone(),
            stages: Vec::new(),
            skipped: Vec::new(),
            judge_stats: JudgeStats::default(),
            cost_estimate: cfg.cost_estimate(),
            complete: false,
        },
    };

    let base = r.stage(
        "ingest",
        None,
        &["base.emb".into(), "base.meta.json".into()],
        |dir| {
            let set = load_embedding_set(&cfg.embeddings)?;
            let set = if cfg.standardize { standardize(&set)?.0 } else { set };
            save_embedding_set(&set, dir.join("base"))?;
            // continue from the stored f32 values so a resumed run sees the same input
            let set = load_embedding_set(dir.join("base"))?;
            let stats = json!({ "n": set.n(), "d": set.d(), "standardized": cfg.standardize });
            Ok((set, stats))
        },
        |dir| load_embedding_set(dir.join("base")),
    )?;

    let mut current = base.clone();
    let mut adapter = initial_adapter(cfg, base.d());
    let mut rounds: Vec<(Vec<TripletJudgment>, EmbeddingSet, EmbeddingSet)> = Vec::new();
    for it in 1..=cfg.iterations {
        let sub = format!("iter-{it}");
        let seed = |name: &str| seeds[&format!("{name}-{it}")];

        let model: ClusterModel = r.stage(
            "cluster",
            Some(it),
            &[format!("{sub}/cluster.json")],
            |dir| {
                let m = cluster_set(&current, &cfg.cluster, seed("cluster"))?;
                write_json(&dir.join(format!("{sub}/cluster.json")), &m)?;
                let stats = json!({ "k": m.k, "inertia": m.inertia, "method": m.method });
                Ok((m, stats))
            },
            |dir| read_json(&dir.join(format!("{sub}/cluster.json"))),
        )?;

        let triplets: Vec<Triplet> = r.stage(
            "sample",
            Some(it),
            &[format!("{sub}/triplets.jsonl")],
            |dir| {
                let soft = soft_assign(&current, &model, cfg.alpha)?;
                let profile = entropy(&soft);
                let s = sample_triplets(&current, &model, &soft, &profile, &cfg.sampler, seed("sample"))?;
                write_triplets(dir.join(format!("{sub}/triplets.jsonl")), &s.triplets, &current)?;
                let stats = json!({
                    "triplets": s.triplets.len(),
                    "stalled": s.stalled,
                    "attempts": s.attempts,
                    "mean_entropy": profile.mean_over(0..current.n()),
                    "mean_anchor_entropy": profile.mean_over(s.triplets.iter().map(|t| t.anchor)),
                });
                Ok((s.triplets, stats))
            },
            |dir| read_triplets(dir.join(format!("{sub}/triplets.jsonl")), &current),
        )?;

        let judgments = r.stage(
            "judge",
            Some(it),
            &[format!("{sub}/judgments.jsonl")],
            |dir| {
                let mut jc = cfg.judge.clone();
                jc.seed = seed("judge");
                let mut judge = build_judge(jc, &opts.transport)?;
                let out = judge.judge_triplets(&cfg.prompt, &triplets, &current)?;
                check_transport(out.judgments.iter().map(|j| &j.error))?;
                write_triplet_judgments(dir.join(format!("{sub}/judgments.jsonl")), &out.judgments, &current)?;
                Ok((out.judgments, json!({ "judge": out.stats, "id": judge.id() })))
            },
            |dir| read_triplet_judgments(dir.join(format!("{sub}/judgments.jsonl")), &current),
        )?;

        adapter = r.stage(
            "finetune",
            Some(it),
            &[format!("{sub}/adapter.emb"), format!("{sub}/adapter.meta.json")],
            |dir| {
                let tc = TrainConfig {
                    seed: seed("finetune"),
                    ..cfg.train.clone()
                };
                // the adapter always maps the base space; later rounds warm-start
                let out = train(&adapter, &judgments, &base, &tc)?;
                save_adapter(&out.adapter, Some(&tc), &out.loss_trace, dir.join(format!("{sub}/adapter")))?;
                let stats = json!({
                    "used": out.used,
                    "loss_first": out.loss_trace.first(),
                    "loss_last": out.loss_trace.last(),
                });
                Ok((out.adapter, stats))
            },
            |dir| Ok(load_adapter(dir.join(format!("{sub}/adapter")))?.0),
        )?;

        let adapted = r.stage(
            "apply",
            Some(it),
            &[format!("{sub}/adapted.emb"), format!("{sub}/adapted.meta.json")],
            |dir| {
                let stem = dir.join(format!("{sub}/adapted"));
                save_embedding_set(&apply_adapter(&adapter, &base)?, &stem)?;
                let set = load_embedding_set(&stem)?;
                let stats = json!({ "d": set.d() });
                Ok((set, stats))
            },
            |dir| load_embedding_set(dir.join(format!("{sub}/adapted"))),
        )?;
        rounds.push((judgments, current, adapted.clone()));
        current = adapted;
    }

    let mut outcome: Option<(GranularityOutcome, EmbeddingSet, MergeHistory)> = None;
    if let Some(gc) = &cfg.granularity {
        let hset = if cfg.hierarchy.standardize { standardize(&current)?.0 } else { current.clone() };
        let history: MergeHistory = r.stage(
            "hierarchy",
            None,
            &["hierarchy.json".into()],
            |dir| {
                let h = match cfg.hierarchy.k_start {
                    Some(k) => two_step_hierarchy(&hset, k, seeds["hierarchy"])?.1,
                    None => agglomerative(&hset, Linkage::Ward, Stop::TargetK(1))?.1,
                };
                write_json(&dir.join("hierarchy.json"), &h)?;
                let stats = json!({ "leaf_count": h.leaf_count, "steps": h.steps.len() });
                Ok((h, stats))
            },
            |dir| read_json(&dir.join("hierarchy.json")),
        )?;
        let decided: GranularityOutcome = r.stage(
            "granularity",
            None,
            &["granularity.json".into(), "pair_judgments.jsonl".into()],
            |dir| {
                let gcfg = GranularityConfig {
                    seed: seeds["pairs"],
                    ..gc.clone()
                };
                let pairs: Vec<(usize, usize)> = sample_step_pairs(&history, &gcfg)?.iter().map(|p| p.pair).collect();
                let mut jc = cfg.pair_judge().clone();
                jc.seed = seeds["pair_judge"];
                let mut judge = build_judge(jc, &opts.transport)?;
                let out = judge.judge_pairs(&cfg.prompt, &pairs, &hset)?;
                check_transport(out.judgments.iter().map(|j| &j.error))?;
                write_pair_judgments(dir.join("pair_judgments.jsonl"), &out.judgments, &hset)?;
                let decision = choose_granularity(&history, &out.judgments, &gcfg)?;
                let baselines = cfg
                    .baselines
                    .iter()
                    .map(|b| Ok((b.name().to_string(), baseline_select(&history, &hset, *b, &gcfg)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                let o = GranularityOutcome {
                    pairs: pairs.len(),
                    decision,
                    baselines,
                };
                write_json(&dir.join("granularity.json"), &o)?;
                let stats = json!({
                    "k_star": o.decision.k_star,
                    "pairs": o.pairs,
                    "baselines": o.baselines,
                    "judge": out.stats,
                    "id": judge.id(),
                });
                Ok((o, stats))
            },
            |dir| read_json(&dir.join("granularity.json")),
        )?;
        outcome = Some((decided, hset, history));
    } else {
        r.manifest.skipped.extend(["hierarchy".to_string(), "granularity".to_string()]);
    }

    match base.labels() {
        Some(labels) if cfg.evaluation.enabled => {
            let k_true = labels.num_classes();
            r.stage(
                "evaluate",
                None,
                &["evaluation.json".into()],
                |dir| {
                    let seeds = &cfg.evaluation.seeds;
                    let base_report = evaluate_kmeans(&base, None, seeds)?;
                    let mut refined = Vec::new();
                    let mut triplets = Vec::new();
                    for (i, (judgments, before, after)) in rounds.iter().enumerate() {
                        refined.push(evaluate_kmeans(after, None, seeds)?);
                        triplets.push(TripletEval {
                            iteration: i + 1,
                            before: triplet_accuracy(judgments, before)?,
                            after: triplet_accuracy(judgments, after)?,
                        });
                    }
                    let granularity = outcome.as_ref().map(|(o, _, _)| GranularityEval {
                        k_true,
                        k_star: o.decision.k_star,
                        error: granularity_error(o.decision.k_star, k_true),
                        baseline_errors: o
                            .baselines
                            .iter()
                            .map(|(name, &k)| (name.clone(), granularity_error(k, k_true)))
                            .collect(),
                    });
                    let e = Evaluation {
                        base: base_report,
                        refined,
                        triplets,
                        granularity,
                    };
                    write_json(&dir.join("evaluation.json"), &e)?;
                    let stats = json!({
                        "base_accuracy": e.base.accuracy_mean,
                        "refined_accuracy": e.refined.last().map(|r| r.accuracy_mean),
                    });
                    Ok((e, stats))
                },
                |dir| read_json::<Evaluation>(&dir.join("evaluation.json")),
            )?;
        }
        _ => r.manifest.skipped.push("evaluate".to_string()),
    }

    r.manifest.complete = true;
    r.save()?;
    Ok(r.manifest)
}
