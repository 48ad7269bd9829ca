//! Common interface the evaluation loop drives, plus the method catalogue.

use serde::{Deserialize, Serialize};

use crate::baselines::{
    fit_offline, ncm_rank, ExStream, ExStreamParams, FineTune, OfflineParams, SgdParams, SoftmaxReadout,
};
use crate::error::{Error, Result};
use crate::numerics::{ShrinkageConfig, DEFAULT_EPSILON};
use crate::ranking::Ranked;
use crate::slda::{ClassMeans, CovarianceInit, CovarianceMode, SldaModel, SldaPredictor};

/// A single-writer streaming learner.
pub trait StreamLearner: Send {
    /// Offline warm-up on the base-initialization prefix.
    fn base_fit(&mut self, samples: &[(Vec<f64>, usize)]) -> Result<()>;
    fn learn(&mut self, z: &[f64], y: usize) -> Result<()>;
    /// Freezes the current state into a predictor. Any work needed before
    /// inference (matrix inversion, offline fitting) happens here.
    fn snapshot(&mut self) -> Result<Box<dyn Predictor>>;
    /// Storage beyond the network parameters, at 4 bytes per stored value.
    fn memory_bytes(&self) -> u64;
}

/// Immutable classifier that may be shared across threads.
pub trait Predictor: Send + Sync {
    fn rank(&self, z: &[f64], top_k: usize) -> Vec<Ranked>;
}

impl Predictor for SldaPredictor {
    fn rank(&self, z: &[f64], top_k: usize) -> Vec<Ranked> {
        self.predict(z, top_k)
    }
}

impl Predictor for SoftmaxReadout {
    fn rank(&self, z: &[f64], top_k: usize) -> Vec<Ranked> {
        self.predict(z, top_k)
    }
}

impl Predictor for ClassMeans {
    fn rank(&self, z: &[f64], top_k: usize) -> Vec<Ranked> {
        ncm_rank(self, z, top_k).unwrap_or_default()
    }
}

impl StreamLearner for SldaModel {
    fn base_fit(&mut self, samples: &[(Vec<f64>, usize)]) -> Result<()> {
        SldaModel::base_fit(self, samples)
    }

    fn learn(&mut self, z: &[f64], y: usize) -> Result<()> {
        SldaModel::learn(self, z, y)
    }

    fn snapshot(&mut self) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(SldaModel::snapshot(self)?))
    }

    fn memory_bytes(&self) -> u64 {
        SldaModel::memory_bytes(self)
    }
}

/// Fine-tuning with an offline base phase on the base-initialization prefix.
pub struct FineTuneLearner {
    inner: FineTune,
    base: OfflineParams,
    seed: u64,
}

impl StreamLearner for FineTuneLearner {
    fn base_fit(&mut self, samples: &[(Vec<f64>, usize)]) -> Result<()> {
        self.inner.readout = warm_start(&self.inner.readout, samples, &self.base, self.seed)?;
        Ok(())
    }

    fn learn(&mut self, z: &[f64], y: usize) -> Result<()> {
        self.inner.learn(z, y)
    }

    fn snapshot(&mut self) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.inner.readout.clone()))
    }

    fn memory_bytes(&self) -> u64 {
        0
    }
}

/// Offline fit on the base set, returned with the streaming hyperparameters
/// of `r` and zeroed momentum.
fn warm_start(
    r: &SoftmaxReadout,
    samples: &[(Vec<f64>, usize)],
    base: &OfflineParams,
    seed: u64,
) -> Result<SoftmaxReadout> {
    let fitted = fit_offline(samples, r.dim(), r.num_classes(), base, seed)?;
    let mut warm = SoftmaxReadout::new(r.dim(), r.num_classes(), r.params);
    warm.weights = fitted.weights;
    warm.bias = fitted.bias;
    Ok(warm)
}

/// ExStream with an offline base phase, after which the base samples are
/// streamed through the buffer like any other sample.
pub struct ExStreamLearner {
    inner: ExStream,
    base: OfflineParams,
    seed: u64,
}

impl StreamLearner for ExStreamLearner {
    fn base_fit(&mut self, samples: &[(Vec<f64>, usize)]) -> Result<()> {
        self.inner.readout = warm_start(&self.inner.readout, samples, &self.base, self.seed)?;
        for (z, y) in samples {
            self.inner.learn(z, *y)?;
        }
        Ok(())
    }

    fn learn(&mut self, z: &[f64], y: usize) -> Result<()> {
        self.inner.learn(z, y)
    }

    fn snapshot(&mut self) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.inner.readout.clone()))
    }

    fn memory_bytes(&self) -> u64 {
        4 * self.inner.buffer.stored_values()
    }
}

pub struct NcmLearner {
    means: ClassMeans,
}

impl NcmLearner {
    pub fn new(dim: usize, num_classes: usize) -> Self {
        Self {
            means: ClassMeans::new(dim, num_classes),
        }
    }
}

impl StreamLearner for NcmLearner {
    fn base_fit(&mut self, samples: &[(Vec<f64>, usize)]) -> Result<()> {
        for (z, y) in samples {
            self.means.update(z, *y)?;
        }
        Ok(())
    }

    fn learn(&mut self, z: &[f64], y: usize) -> Result<()> {
        self.means.update(z, y)
    }

    fn snapshot(&mut self) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.means.clone()))
    }

    fn memory_bytes(&self) -> u64 {
        let (k, d) = (self.means.num_classes() as u64, self.means.dim() as u64);
        4 * (k * d + k)
    }
}

/// Offline reference: keeps every sample and retrains from scratch, with a
/// fixed seed, whenever a snapshot is requested.
pub struct OfflineLearner {
    dim: usize,
    num_classes: usize,
    samples: Vec<(Vec<f64>, usize)>,
    params: OfflineParams,
    seed: u64,
}

impl OfflineLearner {
    pub fn new(dim: usize, num_classes: usize, params: OfflineParams, seed: u64) -> Self {
        Self {
            dim,
            num_classes,
            samples: Vec::new(),
            params,
            seed,
        }
    }
}

impl StreamLearner for OfflineLearner {
    fn base_fit(&mut self, samples: &[(Vec<f64>, usize)]) -> Result<()> {
        for (z, y) in samples {
            self.learn(z, *y)?;
        }
        Ok(())
    }

    fn learn(&mut self, z: &[f64], y: usize) -> Result<()> {
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
        self.samples.push((z.to_vec(), y));
        Ok(())
    }

    fn snapshot(&mut self) -> Result<Box<dyn Predictor>> {
        if self.samples.is_empty() {
            return Err(Error::EmptyBank);
        }
        Ok(Box::new(fit_offline(
            &self.samples,
            self.dim,
            self.num_classes,
            &self.params,
            self.seed,
        )?))
    }

    fn memory_bytes(&self) -> u64 {
        4 * self.samples.len() as u64 * (self.dim as u64 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovInitKind {
    /// OAS estimate over the base-initialization features.
    Oas,
    Ones,
    Zero,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_cov_init() -> CovInitKind {
    CovInitKind::Oas
}

/// One method entry of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    Slda {
        name: String,
        mode: CovarianceMode,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_cov_init")]
        cov_init: CovInitKind,
    },
    Exstream {
        name: String,
        #[serde(default)]
        params: ExStreamParams,
        #[serde(default)]
        base: OfflineParams,
    },
    Finetune {
        name: String,
        #[serde(default)]
        sgd: SgdParams,
        #[serde(default)]
        base: OfflineParams,
    },
    Ncm {
        name: String,
    },
    Offline {
        name: String,
        #[serde(default)]
        params: OfflineParams,
    },
}

impl MethodSpec {
    pub fn name(&self) -> &str {
        match self {
            MethodSpec::Slda { name, .. }
            | MethodSpec::Exstream { name, .. }
            | MethodSpec::Finetune { name, .. }
            | MethodSpec::Ncm { name }
            | MethodSpec::Offline { name, .. } => name,
        }
    }

    /// Builds a fresh learner. `base_features` seeds an OAS covariance.
    pub fn build(
        &self,
        dim: usize,
        num_classes: usize,
        base_features: &[Vec<f64>],
        seed: u64,
    ) -> Result<Box<dyn StreamLearner>> {
        Ok(match self {
            MethodSpec::Slda {
                mode,
                epsilon,
                cov_init,
                ..
            } => {
                let init = match cov_init {
                    CovInitKind::Oas => CovarianceInit::FromBank(base_features),
                    CovInitKind::Ones => CovarianceInit::OnesMatrix,
                    CovInitKind::Zero => CovarianceInit::Zero,
                };
                Box::new(SldaModel::new(
                    dim,
                    num_classes,
                    init,
                    *mode,
                    ShrinkageConfig::new(*epsilon)?,
                )?)
            }
            MethodSpec::Exstream { params, base, .. } => Box::new(ExStreamLearner {
                inner: ExStream::new(dim, num_classes, *params, seed)?,
                base: *base,
                seed,
            }),
            MethodSpec::Finetune { sgd, base, .. } => Box::new(FineTuneLearner {
                inner: FineTune::new(dim, num_classes, *sgd),
                base: *base,
                seed,
            }),
            MethodSpec::Ncm { .. } => Box::new(NcmLearner::new(dim, num_classes)),
            MethodSpec::Offline { params, .. } => {
                Box::new(OfflineLearner::new(dim, num_classes, *params, seed))
            }
        })
    }
}
