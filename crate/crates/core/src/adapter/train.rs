use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{triplet_batch_loss, AdapterModel};
use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};
use crate::oracle::TripletJudgment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub tau: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.05,
            batch_size: 32,
            epochs: 15,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::arg("tau must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::arg("batch_size must be at least 2"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::arg("learning_rate must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub adapter: AdapterModel,
    /// Mean loss over the unshuffled batches: entry 0 before any update,
    /// entry `e` after epoch `e`.
    pub loss_trace: Vec<f64>,
    /// Judgments used (ambiguous ones are skipped).
    pub used: usize,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grads[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

fn evaluation_loss(adapter: &AdapterModel, triplets: &[(usize, usize, usize)], set: &EmbeddingSet, cfg: &TrainConfig) -> f64 {
    let batches: Vec<f64> = triplets
        .chunks(cfg.batch_size)
        .map(|b| triplet_batch_loss(adapter, b, set.vectors(), cfg.tau).loss)
        .collect();
    batches.iter().sum::<f64>() / batches.len() as f64
}

/// Trains the adapter with Adam on seeded, reshuffled mini-batches.
/// Parameters are rounded to 32-bit floats at the end so a saved adapter
/// reloads exactly.
pub fn train(adapter: &AdapterModel, judgments: &[TripletJudgment], set: &EmbeddingSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if set.d() != adapter.d_in() {
        return Err(Error::arg(format!("adapter expects dimension {}, embeddings have {}", adapter.d_in(), set.d())));
    }
    let mut triplets: Vec<(usize, usize, usize)> = judgments.iter().filter_map(|j| j.oriented()).collect();
    if triplets.is_empty() {
        return Err(Error::arg("no usable judgments to train on"));
    }
    let mut model = adapter.clone();
    let mut params = model.params();
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let canonical = triplets.clone();
    let mut trace = vec![evaluation_loss(&model, &canonical, set, cfg)];
    for epoch in 0..cfg.epochs {
        triplets.shuffle(&mut rng);
        for (b, batch) in triplets.chunks(cfg.batch_size).enumerate() {
            let value = triplet_batch_loss(&model, batch, set.vectors(), cfg.tau);
            if !value.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: value.loss,
                    param_norm: model.param_norm(),
                });
            }
            if cfg.learning_rate > 0.0 {
                adam.step(&mut params, &value.grads.flatten(), cfg.learning_rate);
                model.set_params(&params);
            }
        }
        let loss = evaluation_loss(&model, &canonical, set, cfg);
        log::debug!("epoch {epoch}: loss {loss:.6}");
        trace.push(loss);
    }
    model.round_to_f32();
    Ok(TrainOutcome {
        adapter: model,
        loss_trace: trace,
        used: canonical.len(),
    })
}
