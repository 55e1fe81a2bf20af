use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cache::{cache_key, ResponseCache};
use super::parse::{parse_pair_response, parse_triplet_response};
use super::prompt::{render_pair_prompt, render_triplet_prompt, PromptSpec};
use super::transport::{call_with_retry, ChatRequest, ChatTransport, HttpTransport, RateLimiter, RetryPolicy};
use super::{JudgeConfig, JudgeKind, PairJudgment, PairVerdict, TripletJudgment, TripletVerdict};
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};
use crate::sampler::{Triplet, TripletSource};

/// Counters for one judging call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeStats {
    pub queries: usize,
    pub cache_hits: usize,
    pub remote_calls: usize,
    pub ambiguous: usize,
    pub transport_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Judged<T> {
    pub judgments: Vec<T>,
    pub stats: JudgeStats,
}

pub struct Judge {
    cfg: JudgeConfig,
    transport: Option<Arc<dyn ChatTransport>>,
    cache: ResponseCache,
}

/// Raw answer for one prompt: the response text or a failure note.
type Answer = std::result::Result<String, String>;

fn cosine(set: &EmbeddingSet, a: usize, b: usize) -> f64 {
    let (x, y) = (set.row(a), set.row(b));
    let dot = x.dot(&y);
    let norm = (x.dot(&x) * y.dot(&y)).sqrt();
    if norm == 0.0 {
        0.0
    } else {
        dot / norm
    }
}

fn distance_verdict(set: &EmbeddingSet, t: &Triplet) -> TripletVerdict {
    let s1 = cosine(set, t.anchor, t.choice1);
    let s2 = cosine(set, t.anchor, t.choice2);
    if s1 > s2 {
        TripletVerdict::Choice1
    } else if s2 > s1 {
        TripletVerdict::Choice2
    } else {
        TripletVerdict::Ambiguous
    }
}

fn triplet_text(v: TripletVerdict) -> &'static str {
    match v {
        TripletVerdict::Choice1 => "Choice 1",
        TripletVerdict::Choice2 => "Choice 2",
        TripletVerdict::Ambiguous => "",
    }
}

fn pair_text(v: PairVerdict) -> &'static str {
    match v {
        PairVerdict::Same => "Yes",
        PairVerdict::Different => "No",
        PairVerdict::Ambiguous => "",
    }
}

fn flip_triplet(v: TripletVerdict) -> TripletVerdict {
    match v {
        TripletVerdict::Choice1 => TripletVerdict::Choice2,
        TripletVerdict::Choice2 => TripletVerdict::Choice1,
        TripletVerdict::Ambiguous => TripletVerdict::Ambiguous,
    }
}

fn flip_pair(v: PairVerdict) -> PairVerdict {
    match v {
        PairVerdict::Same => PairVerdict::Different,
        PairVerdict::Different => PairVerdict::Same,
        PairVerdict::Ambiguous => PairVerdict::Ambiguous,
    }
}

// separate noise streams for the two question types
const TRIPLET_STREAM: u64 = 0x7472_6970;
const PAIR_STREAM: u64 = 0x7061_6972;

impl Judge {
    /// Builds a judge; remote judges talk HTTP to `cfg.endpoint`.
    pub fn new(cfg: JudgeConfig) -> Result<Self> {
        let transport: Option<Arc<dyn ChatTransport>> = match cfg.kind {
            JudgeKind::Remote => Some(Arc::new(HttpTransport::from_env(cfg.endpoint.clone(), &cfg.api_key_env))),
            _ => None,
        };
        Self::build(cfg, transport)
    }

    /// Builds a judge over a caller-supplied transport (used for remote kinds only).
    pub fn with_transport(cfg: JudgeConfig, transport: Arc<dyn ChatTransport>) -> Result<Self> {
        Self::build(cfg, Some(transport))
    }

    fn build(cfg: JudgeConfig, transport: Option<Arc<dyn ChatTransport>>) -> Result<Self> {
        cfg.validate()?;
        let cache = match &cfg.cache_path {
            Some(p) => ResponseCache::open(p)?,
            None if cfg.kind == JudgeKind::Replay => {
                return Err(Error::arg("replay judge needs a cache path"));
            }
            None => ResponseCache::in_memory(),
        };
        Ok(Judge { cfg, transport, cache })
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.cfg
    }

    pub fn id(&self) -> String {
        match self.cfg.kind {
            JudgeKind::Remote => format!("remote:{}", self.cfg.model),
            JudgeKind::Replay => format!("replay:{}", self.cfg.model),
            JudgeKind::GroundTruth => "ground_truth".into(),
            JudgeKind::Distance => "distance".into(),
            JudgeKind::Noisy => format!("noisy:{}", self.cfg.flip_probability),
        }
    }

    fn key(&self, prompt: &str) -> String {
        // replay reads what the remote judge wrote
        cache_key("remote", &self.cfg.model, prompt)
    }

    fn ask(&mut self, prompts: &[String], stats: &mut JudgeStats) -> Result<Vec<Answer>> {
        match self.cfg.kind {
            JudgeKind::Replay => self.ask_replay(prompts, stats),
            JudgeKind::Remote => self.ask_remote(prompts, stats),
            _ => unreachable!("simulated judges do not render prompts"),
        }
    }

    fn ask_replay(&self, prompts: &[String], stats: &mut JudgeStats) -> Result<Vec<Answer>> {
        prompts
            .iter()
            .map(|p| {
                let key = self.key(p);
                match self.cache.get(&key) {
                    Some(e) => {
                        stats.cache_hits += 1;
                        Ok(Ok(e.response.clone()))
                    }
                    None => Err(Error::Judge(format!("replay cache miss for key {key}"))),
                }
            })
            .collect()
    }

    fn ask_remote(&mut self, prompts: &[String], stats: &mut JudgeStats) -> Result<Vec<Answer>> {
        let transport = self
            .transport
            .clone()
            .ok_or_else(|| Error::Judge("remote judge has no transport".into()))?;
        let keys: Vec<String> = prompts.iter().map(|p| self.key(p)).collect();

        // one request per distinct uncached prompt, in first-seen order
        let mut pending: Vec<usize> = Vec::new();
        let mut slot_of: HashMap<&str, usize> = HashMap::new();
        for (i, key) in keys.iter().enumerate() {
            if self.cache.get(key).is_some() {
                stats.cache_hits += 1;
            } else if !slot_of.contains_key(key.as_str()) {
                slot_of.insert(key, pending.len());
                pending.push(i);
            }
        }

        let results: Vec<Mutex<Option<Answer>>> = pending.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let limiter = RateLimiter::new(Duration::from_millis(self.cfg.min_interval_ms));
        let policy = RetryPolicy {
            max_retries: self.cfg.max_retries,
            base_delay: Duration::from_millis(self.cfg.backoff_base_ms),
        };
        let workers = self.cfg.max_in_flight.min(pending.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let j = next.fetch_add(1, Ordering::SeqCst);
                    if j >= pending.len() {
                        break;
                    }
                    let request = ChatRequest {
                        model: self.cfg.model.clone(),
                        prompt: prompts[pending[j]].clone(),
                        temperature: self.cfg.temperature,
                        max_tokens: self.cfg.max_tokens,
                    };
                    let out = call_with_retry(transport.as_ref(), &limiter, policy, &request).map_err(|e| e.to_string());
                    *results[j].lock().unwrap() = Some(out);
                });
            }
        });
        stats.remote_calls += pending.len();

        let fetched: Vec<Answer> = results
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every pending prompt is answered"))
            .collect();
        let judge = self.id();
        let new_entries = pending
            .iter()
            .zip(&fetched)
            .filter_map(|(&i, a)| {
                a.as_ref()
                    .ok()
                    .map(|r| (keys[i].clone(), prompts[i].clone(), r.clone(), judge.clone()))
            })
            .collect();
        self.cache.insert_all(new_entries)?;

        Ok(keys
            .iter()
            .map(|key| match self.cache.get(key) {
                Some(e) => Ok(e.response.clone()),
                None => {
                    stats.transport_failures += 1;
                    Err(fetched[slot_of[key.as_str()]].clone().unwrap_err())
                }
            })
            .collect())
    }

    fn labels<'a>(&self, set: &'a EmbeddingSet) -> Result<&'a crate::corpus::Labels> {
        set.labels()
            .ok_or_else(|| Error::Judge(format!("{} judge needs ground-truth labels", self.id())))
    }

    /// Answers each triplet question, in input order.
    pub fn judge_triplets(&mut self, spec: &PromptSpec, triplets: &[Triplet], set: &EmbeddingSet) -> Result<Judged<TripletJudgment>> {
        let mut stats = JudgeStats {
            queries: triplets.len(),
            ..Default::default()
        };
        let judge = self.id();
        let simulated = |verdict: TripletVerdict, t: &Triplet| TripletJudgment {
            triplet: *t,
            verdict,
            raw_response: triplet_text(verdict).to_string(),
            judge: judge.clone(),
            error: None,
        };
        let judgments: Vec<TripletJudgment> = match self.cfg.kind {
            JudgeKind::GroundTruth | JudgeKind::Noisy => {
                let labels = self.labels(set)?;
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ TRIPLET_STREAM);
                triplets
                    .iter()
                    .map(|t| {
                        let a = labels.get(t.anchor);
                        let (p1, p2) = (labels.get(t.choice1) == a, labels.get(t.choice2) == a);
                        let mut v = match (p1, p2) {
                            (true, false) => TripletVerdict::Choice1,
                            (false, true) => TripletVerdict::Choice2,
                            _ => distance_verdict(set, t),
                        };
                        if self.cfg.kind == JudgeKind::Noisy && rng.random_bool(self.cfg.flip_probability) {
                            v = flip_triplet(v);
                        }
                        simulated(v, t)
                    })
                    .collect()
            }
            JudgeKind::Distance => triplets.iter().map(|t| simulated(distance_verdict(set, t), t)).collect(),
            JudgeKind::Remote | JudgeKind::Replay => {
                let prompts = triplets
                    .iter()
                    .map(|t| render_triplet_prompt(spec, t, set))
                    .collect::<Result<Vec<_>>>()?;
                let answers = self.ask(&prompts, &mut stats)?;
                triplets
                    .iter()
                    .zip(answers)
                    .map(|(t, a)| match a {
                        Ok(raw) => TripletJudgment {
                            triplet: *t,
                            verdict: parse_triplet_response(&raw),
                            raw_response: raw,
                            judge: judge.clone(),
                            error: None,
                        },
                        Err(note) => TripletJudgment {
                            triplet: *t,
                            verdict: TripletVerdict::Ambiguous,
                            raw_response: String::new(),
                            judge: judge.clone(),
                            error: Some(note),
                        },
                    })
                    .collect()
            }
        };
        stats.ambiguous = judgments.iter().filter(|j| j.verdict == TripletVerdict::Ambiguous).count();
        Ok(Judged { judgments, stats })
    }

    /// Answers each same-cluster question, in input order.
    pub fn judge_pairs(&mut self, spec: &PromptSpec, pairs: &[(usize, usize)], set: &EmbeddingSet) -> Result<Judged<PairJudgment>> {
        let mut stats = JudgeStats {
            queries: pairs.len(),
            ..Default::default()
        };
        let judge = self.id();
        let judgments: Vec<PairJudgment> = match self.cfg.kind {
            JudgeKind::GroundTruth | JudgeKind::Noisy => {
                let labels = self.labels(set)?;
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ PAIR_STREAM);
                pairs
                    .iter()
                    .map(|&(a, b)| {
                        let mut v = if labels.get(a) == labels.get(b) {
                            PairVerdict::Same
                        } else {
                            PairVerdict::Different
                        };
                        if self.cfg.kind == JudgeKind::Noisy && rng.random_bool(self.cfg.flip_probability) {
                            v = flip_pair(v);
                        }
                        PairJudgment {
                            pair: (a, b),
                            verdict: v,
                            raw_response: pair_text(v).into(),
                            judge: judge.clone(),
                            error: None,
                        }
                    })
                    .collect()
            }
            JudgeKind::Distance => {
                return Err(Error::Judge("the distance judge only answers triplet questions".into()));
            }
            JudgeKind::Remote | JudgeKind::Replay => {
                let prompts = pairs
                    .iter()
                    .map(|&p| render_pair_prompt(spec, p, set))
                    .collect::<Result<Vec<_>>>()?;
                let answers = self.ask(&prompts, &mut stats)?;
                pairs
                    .iter()
                    .zip(answers)
                    .map(|(&p, a)| match a {
                        Ok(raw) => PairJudgment {
                            pair: p,
                            verdict: parse_pair_response(&raw),
                            raw_response: raw,
                            judge: judge.clone(),
                            error: None,
                        },
                        Err(note) => PairJudgment {
                            pair: p,
                            verdict: PairVerdict::Ambiguous,
                            raw_response: String::new(),
                            judge: judge.clone(),
                            error: Some(note),
                        },
                    })
                    .collect()
            }
        };
        stats.ambiguous = judgments.iter().filter(|j| j.verdict == PairVerdict::Ambiguous).count();
        Ok(Judged { judgments, stats })
    }
}

#[derive(Serialize, Deserialize)]
struct TripletJudgmentRecord {
    anchor: String,
    c1: String,
    c2: String,
    entropy: f64,
    source: TripletSource,
    verdict: TripletVerdict,
    raw: String,
    judge: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct PairJudgmentRecord {
    a: String,
    b: String,
    verdict: PairVerdict,
    raw: String,
    judge: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn write_lines<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::load(path.display().to_string(), format!("line {}: {e}", i + 1)))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn lookup(set: &EmbeddingSet, path: &Path, line: usize, id: &str) -> Result<usize> {
    set.index_of(id)
        .ok_or_else(|| Error::load(path.display().to_string(), format!("line {line}: unknown id {id:?}")))
}

pub fn write_triplet_judgments(path: impl AsRef<Path>, judgments: &[TripletJudgment], set: &EmbeddingSet) -> Result<()> {
    write_lines(
        path.as_ref(),
        judgments.iter().map(|j| TripletJudgmentRecord {
            anchor: set.id(j.triplet.anchor).into(),
            c1: set.id(j.triplet.choice1).into(),
            c2: set.id(j.triplet.choice2).into(),
            entropy: j.triplet.anchor_entropy,
            source: j.triplet.source,
            verdict: j.verdict,
            raw: j.raw_response.clone(),
            judge: j.judge.clone(),
            error: j.error.clone(),
        }),
    )
}

pub fn read_triplet_judgments(path: impl AsRef<Path>, set: &EmbeddingSet) -> Result<Vec<TripletJudgment>> {
    let path = path.as_ref();
    read_lines::<TripletJudgmentRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            Ok(TripletJudgment {
                triplet: Triplet {
                    anchor: lookup(set, path, line, &r.anchor)?,
                    choice1: lookup(set, path, line, &r.c1)?,
                    choice2: lookup(set, path, line, &r.c2)?,
                    anchor_entropy: r.entropy,
                    source: r.source,
                },
                verdict: r.verdict,
                raw_response: r.raw,
                judge: r.judge,
                error: r.error,
            })
        })
        .collect()
}

pub fn write_pair_judgments(path: impl AsRef<Path>, judgments: &[PairJudgment], set: &EmbeddingSet) -> Result<()> {
    write_lines(
        path.as_ref(),
        judgments.iter().map(|j| PairJudgmentRecord {
            a: set.id(j.pair.0).into(),
            b: set.id(j.pair.1).into(),
            verdict: j.verdict,
            raw: j.raw_response.clone(),
            judge: j.judge.clone(),
            error: j.error.clone(),
        }),
    )
}

pub fn read_pair_judgments(path: impl AsRef<Path>, set: &EmbeddingSet) -> Result<Vec<PairJudgment>> {
    let path = path.as_ref();
    read_lines::<PairJudgmentRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            Ok(PairJudgment {
                pair: (lookup(set, path, line, &r.a)?, lookup(set, path, line, &r.b)?),
                verdict: r.verdict,
                raw_response: r.raw,
                judge: r.judge,
                error: r.error,
            })
        })
        .collect()
}
