//! Judges for triplet and pairwise questions: a remote chat-completion model
//! behind a response cache, plus simulated judges driven by ground-truth
//! labels or embedding geometry.

mod cache;
mod cost;
mod judge;
mod parse;
mod prompt;
mod transport;

pub use cache::{cache_key, CacheEntry, ResponseCache};
pub use cost::{estimate_cost, CostEstimate, PAIR_TOKENS, TRIPLET_TOKENS};
pub use judge::{read_pair_judgments, read_triplet_judgments, write_pair_judgments, write_triplet_judgments, Judge, JudgeStats, Judged};
pub use parse::{parse_pair_response, parse_triplet_response};
pub use prompt::{
    format_pair_prompt, format_triplet_prompt, perspective_preset, render_pair_prompt, render_triplet_prompt, Demo,
    PromptSpec, BANK77_PAIR_INSTRUCTION, PAIR_POSTFIX, PERSPECTIVE_PRESETS, TRIPLET_POSTFIX,
};
pub use transport::{
    call_with_retry, parse_completion, request_body, ChatRequest, ChatTransport, HttpTransport, RateLimiter, RetryPolicy,
    TransportError,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::Triplet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletVerdict {
    Choice1,
    Choice2,
    Ambiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairVerdict {
    Same,
    Different,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletJudgment {
    pub triplet: Triplet,
    pub verdict: TripletVerdict,
    pub raw_response: String,
    pub judge: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TripletJudgment {
    /// `(anchor, positive, negative)` for a decided judgment.
    pub fn oriented(&self) -> Option<(usize, usize, usize)> {
        let t = &self.triplet;
        match self.verdict {
            TripletVerdict::Choice1 => Some((t.anchor, t.choice1, t.choice2)),
            TripletVerdict::Choice2 => Some((t.anchor, t.choice2, t.choice1)),
            TripletVerdict::Ambiguous => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairJudgment {
    pub pair: (usize, usize),
    pub verdict: PairVerdict,
    pub raw_response: String,
    pub judge: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    Remote,
    #[serde(alias = "gt")]
    GroundTruth,
    Distance,
    Noisy,
    Replay,
}

impl std::str::FromStr for JudgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remote" => Ok(JudgeKind::Remote),
            "gt" | "ground_truth" => Ok(JudgeKind::GroundTruth),
            "distance" => Ok(JudgeKind::Distance),
            "noisy" => Ok(JudgeKind::Noisy),
            "replay" => Ok(JudgeKind::Replay),
            other => Err(Error::arg(format!("unknown judge kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub kind: JudgeKind,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// Verdict flip probability for the noisy judge.
    pub flip_probability: f64,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    /// Minimum spacing between request starts.
    pub min_interval_ms: u64,
    pub cache_path: Option<PathBuf>,
    pub seed: u64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            kind: JudgeKind::GroundTruth,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 0.5,
            max_tokens: 16,
            api_key_env: "OPENAI_API_KEY".into(),
            flip_probability: 0.0,
            max_in_flight: 4,
            max_retries: 3,
            backoff_base_ms: 1000,
            min_interval_ms: 0,
            cache_path: None,
            seed: 0,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::arg(format!("flip probability must be in [0, 1], got {}", self.flip_probability)));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::arg("temperature must be non-negative"));
        }
        if self.max_in_flight == 0 {
            return Err(Error::arg("max_in_flight must be at least 1"));
        }
        Ok(())
    }
}
