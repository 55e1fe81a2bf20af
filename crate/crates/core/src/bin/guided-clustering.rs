use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use guided_clustering::adapter::{apply_adapter, load_adapter, save_adapter, train, AdapterModel, TrainConfig};
use guided_clustering::cluster::{agglomerative, entropy, soft_assign, two_step_hierarchy, ClusterModel, Linkage, MergeHistory, Stop};
use guided_clustering::corpus::{load_embedding_set, save_embedding_set, standardize};
use guided_clustering::eval::{evaluate_kmeans, format_table, triplet_accuracy};
use guided_clustering::granularity::{baseline_select, choose_granularity, sample_step_pairs, Baseline, GranularityConfig};
use guided_clustering::oracle::{
    estimate_cost, read_triplet_judgments, write_pair_judgments, write_triplet_judgments, Judge, JudgeConfig, JudgeKind, PromptSpec, PAIR_TOKENS,
    TRIPLET_TOKENS,
};
use guided_clustering::pipeline::{cluster_set, report, run_pipeline, ClusterConfig, ClusterMethod, RunConfig, RunOptions};
use guided_clustering::sampler::{read_triplets, sample_random_triplets, sample_triplets, write_triplets, SamplerConfig};
use guided_clustering::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Oracle-guided clustering over precomputed embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an embedding set and copy it, optionally standardized.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        standardize: bool,
        /// Leave labels out of the copy.
        #[arg(long)]
        drop_labels: bool,
    },
    /// Center and scale every dimension to unit variance.
    Standardize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// K-means, mini-batch k-means or agglomerative clustering.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_method, default_value = "minibatch_kmeans")]
        method: ClusterMethod,
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Agglomerative stopping distance; overrides `--k`.
        #[arg(long)]
        max_distance: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine triplets from a clustering.
    Sample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.2)]
        gamma: f64,
        #[arg(long, default_value_t = 1024)]
        budget: usize,
        /// Uniformly random triplets instead of entropy-ranked ones.
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ask the judge about every triplet in a file.
    Judge {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        triplets: PathBuf,
        #[command(flatten)]
        judge: JudgeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an adapter on triplet judgments.
    Finetune {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        judgments: PathBuf,
        /// Adapter to continue from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        residual: bool,
        #[arg(long, default_value_t = 15)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.05)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map embeddings through a trained adapter.
    Apply {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        adapter: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a merge history, two-step when `--k-start` is given.
    Hierarchy {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k_start: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Judge pairs drawn from a hierarchy and pick the number of clusters.
    Granularity {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        hierarchy: PathBuf,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 200)]
        k_max: usize,
        #[arg(long, default_value_t = 1)]
        lambda: usize,
        #[arg(long, default_value_t = 0.92)]
        beta: f64,
        /// Comma-separated baselines to report alongside.
        #[arg(long, value_delimiter = ',')]
        baselines: Vec<Baseline>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        judge: JudgeArgs,
        /// Where to write the pair judgments.
        #[arg(long)]
        pairs_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// K-means accuracy and NMI against labels over several seeds.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        /// Cluster count; the number of label classes by default.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// Also report triplet accuracy for these judgments.
        #[arg(long)]
        judgments: Option<PathBuf>,
    },
    /// Run every stage from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resume: bool,
        /// Print the cost estimate and exit without running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Summarize a run directory.
    Report {
        #[arg(long)]
        workdir: PathBuf,
    },
}

#[derive(Args)]
struct JudgeArgs {
    /// JSON judge config; `--kind` overrides its kind.
    #[arg(long)]
    judge_config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<JudgeKind>,
    /// JSON prompt config.
    #[arg(long)]
    prompt: Option<PathBuf>,
    #[arg(long, default_value_t = 0.002)]
    price_per_1k: f64,
    /// Print the cost estimate and exit without judging.
    #[arg(long)]
    dry_run: bool,
}

impl JudgeArgs {
    fn load(&self) -> Result<(JudgeConfig, PromptSpec)> {
        let mut cfg: JudgeConfig = match &self.judge_config {
            Some(p) => read_json(p).map_err(|e| Error::InvalidArgument(e.to_string()))?,
            None => JudgeConfig::default(),
        };
        if let Some(kind) = self.kind {
            cfg.kind = kind;
        }
        let prompt = match &self.prompt {
            Some(p) => read_json(p).map_err(|e| Error::InvalidArgument(e.to_string()))?,
            None => PromptSpec::default(),
        };
        Ok((cfg, prompt))
    }
}

fn parse_method(s: &str) -> std::result::Result<ClusterMethod, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown method {s:?}"))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Load {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Load {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::Load {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

fn print_cost(queries: usize, tokens_per_query: f64, price: f64) {
    let c = estimate_cost(queries, 0, price, tokens_per_query);
    println!("{} queries, about {:.0} tokens, ${:.4}", c.queries, c.tokens, c.dollars);
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            input,
            out,
            standardize: scale,
            drop_labels,
        } => {
            let mut set = load_embedding_set(&input)?;
            if drop_labels {
                set = set.without_labels();
            }
            if scale {
                set = standardize(&set)?.0;
            }
            save_embedding_set(&set, &out)?;
            println!("{} x {}", set.n(), set.d());
        }
        Command::Standardize { input, out } => {
            save_embedding_set(&standardize(&load_embedding_set(&input)?)?.0, &out)?;
        }
        Command::Cluster {
            input,
            method,
            k,
            max_distance,
            seed,
            out,
        } => {
            let set = load_embedding_set(&input)?;
            let cfg = ClusterConfig {
                method,
                k,
                max_distance,
                ..ClusterConfig::default()
            };
            let model = cluster_set(&set, &cfg, seed)?;
            write_json(&out, &model)?;
            println!("k = {}, inertia {:.4}", model.k, model.inertia);
        }
        Command::Sample {
            input,
            clusters,
            alpha,
            gamma,
            budget,
            random,
            seed,
            out,
        } => {
            let set = load_embedding_set(&input)?;
            let sample = if random {
                sample_random_triplets(&set, budget, seed)?
            } else {
                let model: ClusterModel = read_json(&clusters)?;
                let soft = soft_assign(&set, &model, alpha)?;
                let cfg = SamplerConfig {
                    gamma,
                    budget,
                    ..SamplerConfig::default()
                };
                sample_triplets(&set, &model, &soft, &entropy(&soft), &cfg, seed)?
            };
            write_triplets(&out, &sample.triplets, &set)?;
            println!("{} triplets{}", sample.triplets.len(), if sample.stalled { " (stalled)" } else { "" });
        }
        Command::Judge {
            input,
            triplets,
            judge,
            out,
        } => {
            let set = load_embedding_set(&input)?;
            let triplets = read_triplets(&triplets, &set)?;
            if judge.dry_run {
                print_cost(triplets.len(), TRIPLET_TOKENS, judge.price_per_1k);
                return Ok(());
            }
            let (cfg, prompt) = judge.load()?;
            let out_judged = Judge::new(cfg)?.judge_triplets(&prompt, &triplets, &set)?;
            write_triplet_judgments(&out, &out_judged.judgments, &set)?;
            let s = out_judged.stats;
            if s.queries > 0 && s.transport_failures == s.queries {
                return Err(Error::Transport(format!("all {} queries failed", s.queries)));
            }
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::Finetune {
            input,
            judgments,
            init,
            residual,
            epochs,
            lr,
            batch_size,
            tau,
            seed,
            out,
        } => {
            let set = load_embedding_set(&input)?;
            let judged = read_triplet_judgments(&judgments, &set)?;
            let start = match init {
                Some(p) => load_adapter(p)?.0,
                None if residual => AdapterModel::residual(set.d()),
                None => AdapterModel::identity(set.d(), set.d()),
            };
            let cfg = TrainConfig {
                tau,
                batch_size,
                epochs,
                learning_rate: lr,
                seed,
            };
            let outcome = train(&start, &judged, &set, &cfg)?;
            save_adapter(&outcome.adapter, Some(&cfg), &outcome.loss_trace, &out)?;
            println!(
                "{} judgments, loss {:.4} -> {:.4}",
                outcome.used,
                outcome.loss_trace[0],
                outcome.loss_trace.last().unwrap()
            );
        }
        Command::Apply { input, adapter, out } => {
            let set = load_embedding_set(&input)?;
            save_embedding_set(&apply_adapter(&load_adapter(&adapter)?.0, &set)?, &out)?;
        }
        Command::Hierarchy { input, k_start, seed, out } => {
            let set = load_embedding_set(&input)?;
            let history = match k_start {
                Some(k) => two_step_hierarchy(&set, k, seed)?.1,
                None => agglomerative(&set, Linkage::Ward, Stop::TargetK(1))?.1,
            };
            write_json(&out, &history)?;
            println!("{} leaves, {} merges", history.leaf_count, history.steps.len());
        }
        Command::Granularity {
            input,
            hierarchy,
            k_min,
            k_max,
            lambda,
            beta,
            baselines,
            seed,
            judge,
            pairs_out,
            out,
        } => {
            let set = load_embedding_set(&input)?;
            let history: MergeHistory = read_json(&hierarchy)?;
            let cfg = GranularityConfig {
                k_min,
                k_max,
                lambda,
                beta,
                seed,
                ..GranularityConfig::default()
            };
            let pairs: Vec<(usize, usize)> = sample_step_pairs(&history, &cfg)?.iter().map(|p| p.pair).collect();
            if judge.dry_run {
                print_cost(pairs.len(), PAIR_TOKENS, judge.price_per_1k);
                return Ok(());
            }
            let (jc, prompt) = judge.load()?;
            let judged = Judge::new(jc)?.judge_pairs(&prompt, &pairs, &set)?;
            let s = judged.stats;
            if s.queries > 0 && s.transport_failures == s.queries {
                return Err(Error::Transport(format!("all {} queries failed", s.queries)));
            }
            if let Some(p) = pairs_out {
                write_pair_judgments(&p, &judged.judgments, &set)?;
            }
            let decision = choose_granularity(&history, &judged.judgments, &cfg)?;
            let mut chosen = BTreeMap::new();
            for b in baselines {
                chosen.insert(b.name(), baseline_select(&history, &set, b, &cfg)?);
            }
            println!("k* = {} from {} pairs", decision.k_star, pairs.len());
            for (name, k) in &chosen {
                println!("{name}: {k}");
            }
            write_json(&out, &serde_json::json!({ "decision": decision, "baselines": chosen }))?;
        }
        Command::Evaluate { input, k, seeds, judgments } => {
            let set = load_embedding_set(&input)?;
            let r = evaluate_kmeans(&set, k, &seeds)?;
            print!("{}", format_table(&[("kmeans", &r)]));
            if let Some(p) = judgments {
                let acc = triplet_accuracy(&read_triplet_judgments(&p, &set)?, &set)?;
                println!("triplet accuracy: judge {:?}, embedding {:?} over {}", acc.judge, acc.embedding, acc.gt_count);
            }
        }
        Command::Run { config, resume, dry_run } => {
            let cfg = RunConfig::load(&config).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            cfg.validate()?;
            if dry_run {
                let c = cfg.cost_estimate();
                println!("{} queries, about {:.0} tokens, ${:.4}", c.queries, c.tokens, c.dollars);
                return Ok(());
            }
            let opts = RunOptions {
                resume,
                ..RunOptions::default()
            };
            run_pipeline(&cfg, &opts)?;
            print!("{}", report(&cfg.workdir)?);
        }
        Command::Report { workdir } => print!("{}", report(&workdir)?),
    }
    Ok(())
}

/// 2 for bad configuration, 4 when the judge could not be reached, 3 for any
/// other failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::Transport(_) => 4,
        Error::Stage { source, .. } => exit_code(source).max(3),
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
