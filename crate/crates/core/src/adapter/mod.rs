//! Affine adapter over frozen embeddings, trained from triplet judgments with
//! a softmax contrastive objective on cosine similarity.

mod loss;
mod train;

pub use loss::{nce_term, triplet_batch_loss, Gradients, LossValue};
pub use train::{train, TrainConfig, TrainOutcome};

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::corpus::{decode_matrix, encode_matrix, matrix_path, meta_path, EmbeddingSet};
use crate::error::{Error, Result};
use crate::oracle::TripletJudgment;

/// `y = x W + b`, plus `x` when `residual` is set and the map is square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterModel {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub residual: bool,
}

impl AdapterModel {
    /// Identity (or truncated identity when `d_out < d`) with zero bias.
    pub fn identity(d: usize, d_out: usize) -> Self {
        let mut weight = Array2::zeros((d, d_out));
        for i in 0..d.min(d_out) {
            weight[[i, i]] = 1.0;
        }
        AdapterModel {
            weight,
            bias: Array1::zeros(d_out),
            residual: false,
        }
    }

    /// Zero weight and bias on top of a residual connection.
    pub fn residual(d: usize) -> Self {
        AdapterModel {
            weight: Array2::zeros((d, d)),
            bias: Array1::zeros(d),
            residual: true,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.ncols()
    }

    fn adds_input(&self) -> bool {
        self.residual && self.d_in() == self.d_out()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight) + &self.bias;
        if self.adds_input() {
            y += x;
        }
        y
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Weight (row-major) followed by bias.
    pub fn params(&self) -> Vec<f64> {
        self.weight.iter().chain(self.bias.iter()).copied().collect()
    }

    pub fn set_params(&mut self, values: &[f64]) {
        let w = self.weight.len();
        for (dst, src) in self.weight.iter_mut().zip(&values[..w]) {
            *dst = *src;
        }
        for (dst, src) in self.bias.iter_mut().zip(&values[w..]) {
            *dst = *src;
        }
    }

    fn nudge(&mut self, i: usize, delta: f64) {
        let w = self.weight.len();
        if i < w {
            let cols = self.weight.ncols();
            self.weight[[i / cols, i % cols]] += delta;
        } else {
            self.bias[i - w] += delta;
        }
    }

    pub fn param_norm(&self) -> f64 {
        self.params().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub(crate) fn round_to_f32(&mut self) {
        self.weight.mapv_inplace(|v| v as f32 as f64);
        self.bias.mapv_inplace(|v| v as f32 as f64);
    }
}

/// Maps every row of the set through the adapter; ids, texts and labels carry over.
pub fn apply_adapter(adapter: &AdapterModel, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    if set.d() != adapter.d_in() {
        return Err(Error::arg(format!(
            "adapter expects dimension {}, embeddings have {}",
            adapter.d_in(),
            set.d()
        )));
    }
    set.with_vectors(adapter.forward(set.vectors()))
}

/// Decided judgments as `(anchor, positive, negative)`; errors on an ambiguous one.
pub fn oriented_batch(judgments: &[TripletJudgment]) -> Result<Vec<(usize, usize, usize)>> {
    judgments
        .iter()
        .enumerate()
        .map(|(i, j)| {
            j.oriented()
                .ok_or_else(|| Error::arg(format!("judgment {i} is ambiguous; filter it before computing the loss")))
        })
        .collect()
}

/// Loss and analytic gradients on one batch of decided judgments.
pub fn contrastive_loss(adapter: &AdapterModel, batch: &[TripletJudgment], set: &EmbeddingSet, tau: f64) -> Result<LossValue> {
    if !(tau > 0.0) {
        return Err(Error::arg("tau must be positive"));
    }
    let oriented = oriented_batch(batch)?;
    Ok(triplet_batch_loss(adapter, &oriented, set.vectors(), tau))
}

/// Largest `|analytic - numeric| / (|numeric| + 1e-8)` over `samples` randomly
/// chosen parameters, using central differences with step `h`.
pub fn gradient_check(
    adapter: &AdapterModel,
    batch: &[(usize, usize, usize)],
    vectors: &Array2<f64>,
    tau: f64,
    h: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let analytic = triplet_batch_loss(adapter, batch, vectors, tau).grads.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = index::sample(&mut rng, analytic.len(), samples.min(analytic.len()));
    let mut probe = adapter.clone();
    let mut worst: f64 = 0.0;
    for i in chosen.into_iter() {
        probe.nudge(i, h);
        let up = triplet_batch_loss(&probe, batch, vectors, tau).loss;
        probe.nudge(i, -2.0 * h);
        let down = triplet_batch_loss(&probe, batch, vectors, tau).loss;
        probe.nudge(i, h);
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((analytic[i] - numeric).abs() / (numeric.abs() + 1e-8));
    }
    worst
}

/// Sidecar written next to a saved adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterMeta {
    pub d: usize,
    pub d_prime: usize,
    pub residual: bool,
    pub bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub loss_trace: Vec<f64>,
}

/// Writes the weight to `<stem>.emb` and everything else to `<stem>.meta.json`.
/// Parameters are stored as 32-bit floats.
pub fn save_adapter(adapter: &AdapterModel, train_config: Option<&TrainConfig>, loss_trace: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let (mp, sp) = (matrix_path(path.as_ref()), meta_path(path.as_ref()));
    let meta = AdapterMeta {
        d: adapter.d_in(),
        d_prime: adapter.d_out(),
        residual: adapter.residual,
        bias: adapter.bias.iter().map(|&v| v as f32 as f64).collect(),
        tau: train_config.map(|c| c.tau),
        train_config: train_config.cloned(),
        loss_trace: loss_trace.to_vec(),
    };
    fs::write(&mp, encode_matrix(&adapter.weight, 0)).map_err(|e| Error::io(&mp, e))?;
    fs::write(&sp, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&sp, e))
}

pub fn load_adapter(path: impl AsRef<Path>) -> Result<(AdapterModel, AdapterMeta)> {
    let (mp, sp) = (matrix_path(path.as_ref()), meta_path(path.as_ref()));
    let ctx = mp.display().to_string();
    let bytes = fs::read(&mp).map_err(|e| Error::io(&mp, e))?;
    let (header, values) = decode_matrix(&bytes, &ctx)?;
    let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let meta: AdapterMeta = serde_json::from_str(&text).map_err(|e| Error::load(sp.display().to_string(), e.to_string()))?;
    if header.n as usize != meta.d || header.d as usize != meta.d_prime || meta.bias.len() != meta.d_prime {
        return Err(Error::load(
            ctx,
            format!(
                "weight is {}x{}, sidecar says {}x{} with {} bias values",
                header.n,
                header.d,
                meta.d,
                meta.d_prime,
                meta.bias.len()
            ),
        ));
    }
    let weight = Array2::from_shape_vec((meta.d, meta.d_prime), values.into_iter().map(f64::from).collect())
        .expect("shape checked against header");
    let adapter = AdapterModel {
        weight,
        bias: Array1::from(meta.bias.clone()),
        residual: meta.residual,
    };
    Ok((adapter, meta))
}
