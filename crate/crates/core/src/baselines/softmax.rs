use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::FeatureBank;
use crate::error::{Error, Result};
use crate::numerics::dot;
use crate::ranking::{rank_by_score, Ranked};

/// One labelled example borrowed for a gradient step.
pub type Example<'a> = (&'a [f64], usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdParams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

/// Multi-epoch minibatch settings for offline training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdParams,
}

impl Default for OfflineParams {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 256,
            sgd: SgdParams::default(),
        }
    }
}

/// Linear softmax classifier trained with SGD and momentum.
///
/// Minimizes mean cross-entropy plus `weight_decay/2 · ‖W‖²`; the bias is not
/// decayed.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxReadout {
    dim: usize,
    num_classes: usize,
    /// Row-major `K × d`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    velocity_w: Vec<f64>,
    velocity_b: Vec<f64>,
    pub params: SgdParams,
}

/// Gradient of the training objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

impl SoftmaxReadout {
    pub fn new(dim: usize, num_classes: usize, params: SgdParams) -> Self {
        Self {
            dim,
            num_classes,
            weights: vec![0.0; dim * num_classes],
            bias: vec![0.0; num_classes],
            velocity_w: vec![0.0; dim * num_classes],
            velocity_b: vec![0.0; num_classes],
            params,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        (0..self.num_classes)
            .map(|k| dot(self.row(k), z) + self.bias[k])
            .collect()
    }

    pub fn probabilities(&self, z: &[f64]) -> Vec<f64> {
        let mut p = self.logits(z);
        softmax_in_place(&mut p);
        p
    }

    pub fn predict(&self, z: &[f64], top_k: usize) -> Vec<Ranked> {
        rank_by_score(&self.logits(z), top_k)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    fn check(&self, batch: &[Example<'_>]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for &(z, y) in batch {
            if y >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    num_classes: self.num_classes,
                });
            }
            if z.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: z.len(),
                });
            }
        }
        Ok(())
    }

    /// Mean cross-entropy over `batch` plus the weight-decay penalty.
    pub fn objective(&self, batch: &[Example<'_>]) -> Result<f64> {
        self.check(batch)?;
        let mut loss = 0.0;
        for &(z, y) in batch {
            let logits = self.logits(z);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - logits[y];
        }
        let penalty: f64 = self.weights.iter().map(|w| w * w).sum();
        Ok(loss / batch.len() as f64 + 0.5 * self.params.weight_decay * penalty)
    }

    pub fn gradient(&self, batch: &[Example<'_>]) -> Result<Gradient> {
        self.check(batch)?;
        let d = self.dim;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.num_classes];
        for &(z, y) in batch {
            let mut p = self.logits(z);
            softmax_in_place(&mut p);
            p[y] -= 1.0;
            for (k, &err) in p.iter().enumerate() {
                gb[k] += err;
                for (g, &x) in gw[k * d..(k + 1) * d].iter_mut().zip(z) {
                    *g += err * x;
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        for (g, &w) in gw.iter_mut().zip(&self.weights) {
            *g = *g * inv + self.params.weight_decay * w;
        }
        for g in &mut gb {
            *g *= inv;
        }
        Ok(Gradient {
            weights: gw,
            bias: gb,
        })
    }

    /// One momentum step: `v ← m·v + g`, `θ ← θ − lr·v`.
    pub fn sgd_step(&mut self, batch: &[Example<'_>]) -> Result<()> {
        let g = self.gradient(batch)?;
        let SgdParams {
            learning_rate: lr,
            momentum: m,
            ..
        } = self.params;
        for ((w, v), g) in self.weights.iter_mut().zip(&mut self.velocity_w).zip(&g.weights) {
            *v = m * *v + g;
            *w -= lr * *v;
        }
        for ((b, v), g) in self.bias.iter_mut().zip(&mut self.velocity_b).zip(&g.bias) {
            *v = m * *v + g;
            *b -= lr * *v;
        }
        Ok(())
    }

    /// Minibatch SGD over seeded reshuffles of `samples`.
    pub fn fit_epochs<Z: AsRef<[f64]>>(
        &mut self,
        samples: &[(Z, usize)],
        epochs: usize,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        if batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch_size) {
                let batch: Vec<Example<'_>> = chunk
                    .iter()
                    .map(|&i| (samples[i].0.as_ref(), samples[i].1))
                    .collect();
                self.sgd_step(&batch)?;
            }
        }
        Ok(())
    }
}

/// Offline upper bound: a readout trained for several epochs over the whole bank.
pub fn offline_softmax_fit(bank: &FeatureBank, params: &OfflineParams, seed: u64) -> Result<SoftmaxReadout> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    let all: Vec<usize> = (0..bank.len()).collect();
    let samples = bank.labelled_rows(&all);
    fit_offline(&samples, bank.dim, bank.num_classes, params, seed)
}

pub(crate) fn fit_offline<Z: AsRef<[f64]>>(
    samples: &[(Z, usize)],
    dim: usize,
    num_classes: usize,
    params: &OfflineParams,
    seed: u64,
) -> Result<SoftmaxReadout> {
    let mut readout = SoftmaxReadout::new(dim, num_classes, params.sgd);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    readout.fit_epochs(samples, params.epochs, params.batch_size, &mut rng)?;
    Ok(readout)
}
