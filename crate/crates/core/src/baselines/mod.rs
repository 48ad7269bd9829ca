//! Streaming comparison methods: ExStream prototype rehearsal, plain
//! fine-tuning of a softmax readout, nearest class mean, and an offline
//! softmax upper bound.

mod buffer;
mod softmax;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{rank_by_score, Ranked};
use crate::slda::ClassMeans;

pub use self::buffer::{Prototype, PrototypeBuffer};
pub use self::softmax::{offline_softmax_fit, Example, Gradient, OfflineParams, SgdParams, SoftmaxReadout};
pub(crate) use self::softmax::fit_offline;

pub const DEFAULT_PROTOTYPES_PER_CLASS: usize = 20;
pub const DEFAULT_BATCH_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExStreamParams {
    pub capacity_per_class: usize,
    pub batch_cap: usize,
    pub sgd: SgdParams,
}

impl Default for ExStreamParams {
    fn default() -> Self {
        Self {
            capacity_per_class: DEFAULT_PROTOTYPES_PER_CLASS,
            batch_cap: DEFAULT_BATCH_CAP,
            sgd: SgdParams::default(),
        }
    }
}

/// Prototype-buffer rehearsal: every sample is inserted into its class buffer
/// and then one SGD step is taken on (up to `batch_cap` of) the buffer.
#[derive(Debug, Clone)]
pub struct ExStream {
    pub buffer: PrototypeBuffer,
    pub readout: SoftmaxReadout,
    batch_cap: usize,
    rng: ChaCha8Rng,
}

impl ExStream {
    pub fn new(dim: usize, num_classes: usize, params: ExStreamParams, seed: u64) -> Result<Self> {
        if params.capacity_per_class == 0 || params.batch_cap == 0 {
            return Err(Error::config(
                "exstream",
                "capacity_per_class and batch_cap must be at least 1",
            ));
        }
        Ok(Self {
            buffer: PrototypeBuffer::new(params.capacity_per_class, dim, num_classes),
            readout: SoftmaxReadout::new(dim, num_classes, params.sgd),
            batch_cap: params.batch_cap,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Prototype indices (class-major order) used for the next step.
    fn batch_indices(&mut self) -> Vec<usize> {
        let total = self.buffer.len();
        if total <= self.batch_cap {
            (0..total).collect()
        } else {
            let mut picked = index::sample(&mut self.rng, total, self.batch_cap).into_vec();
            picked.sort_unstable();
            picked
        }
    }

    pub fn learn(&mut self, z: &[f64], y: usize) -> Result<()> {
        self.buffer.insert(z, y)?;
        let picked = self.batch_indices();
        let protos: Vec<&Prototype> = self.buffer.iter().collect();
        let batch: Vec<Example<'_>> = picked
            .iter()
            .map(|&i| (protos[i].vector.as_slice(), protos[i].label))
            .collect();
        self.readout.sgd_step(&batch)
    }
}

/// Streaming fine-tuning: one SGD step per incoming sample, no memory.
#[derive(Debug, Clone)]
pub struct FineTune {
    pub readout: SoftmaxReadout,
}

impl FineTune {
    pub fn new(dim: usize, num_classes: usize, params: SgdParams) -> Self {
        Self {
            readout: SoftmaxReadout::new(dim, num_classes, params),
        }
    }

    pub fn learn(&mut self, z: &[f64], y: usize) -> Result<()> {
        self.readout.sgd_step(&[(z, y)])
    }
}

/// Seen classes ranked by ascending Euclidean distance to their mean.
pub fn ncm_rank(means: &ClassMeans, z: &[f64], top_k: usize) -> Result<Vec<Ranked>> {
    if z.len() != means.dim() {
        return Err(Error::DimensionMismatch {
            expected: means.dim(),
            got: z.len(),
        });
    }
    let scores: Vec<f64> = (0..means.num_classes())
        .map(|k| {
            if means.is_seen(k) {
                -means
                    .mean(k)
                    .iter()
                    .zip(z)
                    .map(|(m, x)| (m - x) * (m - x))
                    .sum::<f64>()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let ranked = rank_by_score(&scores, top_k);
    if ranked.is_empty() {
        return Err(Error::NoClassesSeen);
    }
    Ok(ranked)
}

pub fn ncm_predict(means: &ClassMeans, z: &[f64]) -> Result<usize> {
    Ok(ncm_rank(means, z, 1)?[0].label)
}
