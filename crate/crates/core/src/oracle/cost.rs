use serde::{Deserialize, Serialize};

/// Typical prompt + completion tokens for one triplet question.
pub const TRIPLET_TOKENS: f64 = 130.0;
/// Typical tokens for one pairwise question with four demonstrations.
pub const PAIR_TOKENS: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub queries: usize,
    pub tokens: f64,
    pub dollars: f64,
}

/// Linear cost estimate: every query costs `mean_tokens_per_query` tokens.
pub fn estimate_cost(triplet_count: usize, pair_count: usize, price_per_1k_tokens: f64, mean_tokens_per_query: f64) -> CostEstimate {
    let queries = triplet_count + pair_count;
    let tokens = queries as f64 * mean_tokens_per_query.max(0.0);
    CostEstimate {
        queries,
        tokens,
        dollars: tokens / 1000.0 * price_per_1k_tokens.max(0.0),
    }
}
