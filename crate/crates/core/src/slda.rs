//! Streaming linear discriminant analysis head.
//!
//! The model keeps one running mean and count per class plus a single shared
//! covariance. Predictions use the linear Gaussian discriminant
//! `score_k(z) = w_k · z + b_k` with `w_k = Λ μ_k` and `b_k = -½ μ_k · Λ μ_k`,
//! where `Λ = [(1 - ε) Σ + ε I]⁻¹`.
//!
//! In [`CovarianceMode::Plastic`] every learned sample first updates the
//! shared covariance, using the class mean from *before* the sample is folded
//! in:
//!
//! ```text
//! Δ     = t (z - μ_y)(z - μ_y)ᵀ / (t + 1)
//! Σ'    = (t Σ + Δ) / (t + 1),   t' = t + 1
//! μ_y'  = (c_y μ_y + z) / (c_y + 1),   c_y' = c_y + 1
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::binio::{usize_from, ByteReader};
use crate::error::{Error, Result};
use crate::numerics::{dot, oas_covariance, shrinkage_precision, ShrinkageConfig, SymMatrix};
use crate::ranking::{rank_by_score, Ranked};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    /// Σ frozen after initialization.
    Fixed,
    /// Σ updated with every learned sample.
    Plastic,
}

/// How the shared covariance is seeded.
#[derive(Debug, Clone, Copy)]
pub enum CovarianceInit<'a> {
    /// OAS estimate over the given feature vectors; `t` starts at their count.
    FromBank(&'a [Vec<f64>]),
    /// All-ones matrix, `t = 0`.
    OnesMatrix,
    /// Zero matrix, `t = 0`.
    Zero,
}

/// Which [`CovarianceInit`] variant seeded a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSeed {
    Bank,
    Ones,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMeans {
    dim: usize,
    /// Row-major `K × d`.
    means: Vec<f64>,
    counts: Vec<u64>,
}

impl ClassMeans {
    pub fn new(dim: usize, num_classes: usize) -> Self {
        Self {
            dim,
            means: vec![0.0; dim * num_classes],
            counts: vec![0; num_classes],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn count(&self, k: usize) -> u64 {
        self.counts[k]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn is_seen(&self, k: usize) -> bool {
        self.counts[k] > 0
    }

    pub fn seen_classes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.counts.len()).filter(|&k| self.counts[k] > 0)
    }

    pub fn check(&self, z: &[f64], y: usize) -> Result<()> {
        if y >= self.num_classes() {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: self.num_classes(),
            });
        }
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        Ok(())
    }

    /// Folds `z` into the running mean of class `y`.
    pub fn update(&mut self, z: &[f64], y: usize) -> Result<()> {
        self.check(z, y)?;
        let c = self.counts[y] as f64;
        let dim = self.dim;
        for (m, &x) in self.means[y * dim..(y + 1) * dim].iter_mut().zip(z) {
            *m = (c * *m + x) / (c + 1.0);
        }
        self.counts[y] += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub sigma: SymMatrix,
    pub t: u64,
    pub mode: CovarianceMode,
}

impl CovarianceState {
    /// One streaming covariance step for sample `z` whose class mean (before
    /// this sample) is `class_mean`.
    fn update(&mut self, z: &[f64], class_mean: &[f64]) {
        let d = self.sigma.dim();
        let t = self.t as f64;
        let diff: Vec<f64> = z.iter().zip(class_mean).map(|(a, b)| a - b).collect();
        for i in 0..d {
            for j in i..d {
                let delta = t * (diff[i] * diff[j]) / (t + 1.0);
                let v = (t * self.sigma.get(i, j) + delta) / (t + 1.0);
                self.sigma.set(i, j, v);
            }
        }
        self.t += 1;
    }
}

/// Linear readout `W z + b`. Rows of unseen classes are zero with bias `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub dim: usize,
    /// Row-major `K × d`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Total learned-sample count when this readout was computed.
    pub built_at: u64,
}

impl Readout {
    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    pub fn scores(&self, z: &[f64]) -> Vec<f64> {
        (0..self.num_classes())
            .map(|k| {
                if self.bias[k] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    dot(self.row(k), z) + self.bias[k]
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SldaModel {
    means: ClassMeans,
    covariance: CovarianceState,
    shrinkage: ShrinkageConfig,
    seed: CovarianceSeed,
    learned: u64,
    readout: Option<Readout>,
    /// Cached Λ; only reused in fixed mode.
    precision: Option<SymMatrix>,
}

impl SldaModel {
    pub fn new(
        dim: usize,
        num_classes: usize,
        init: CovarianceInit<'_>,
        mode: CovarianceMode,
        shrinkage: ShrinkageConfig,
    ) -> Result<Self> {
        if dim == 0 || num_classes == 0 {
            return Err(Error::BadShape(format!(
                "SLDA needs dim >= 1 and num_classes >= 1 (got {dim}, {num_classes})"
            )));
        }
        let (sigma, t, seed) = match init {
            CovarianceInit::FromBank(samples) => {
                if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: bad.len(),
                    });
                }
                (
                    oas_covariance(samples)?,
                    samples.len() as u64,
                    CovarianceSeed::Bank,
                )
            }
            CovarianceInit::OnesMatrix => (SymMatrix::ones(dim), 0, CovarianceSeed::Ones),
            CovarianceInit::Zero => (SymMatrix::zeros(dim), 0, CovarianceSeed::Zero),
        };
        Ok(Self {
            means: ClassMeans::new(dim, num_classes),
            covariance: CovarianceState { sigma, t, mode },
            shrinkage,
            seed,
            learned: 0,
            readout: None,
            precision: None,
        })
    }

    /// Assembles a model from explicit state; `learned` becomes the total count.
    pub fn from_state(
        means: ClassMeans,
        covariance: CovarianceState,
        seed: CovarianceSeed,
        shrinkage: ShrinkageConfig,
    ) -> Result<Self> {
        if covariance.sigma.dim() != means.dim() {
            return Err(Error::DimensionMismatch {
                expected: means.dim(),
                got: covariance.sigma.dim(),
            });
        }
        if !covariance.sigma.is_finite() || means.means.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadShape("non-finite SLDA state".into()));
        }
        let learned = means.counts.iter().sum();
        Ok(Self {
            means,
            covariance,
            shrinkage,
            seed,
            learned,
            readout: None,
            precision: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.means.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.means.num_classes()
    }

    pub fn class_means(&self) -> &ClassMeans {
        &self.means
    }

    pub fn covariance(&self) -> &CovarianceState {
        &self.covariance
    }

    pub fn mode(&self) -> CovarianceMode {
        self.covariance.mode
    }

    pub fn shrinkage(&self) -> ShrinkageConfig {
        self.shrinkage
    }

    pub fn covariance_seed(&self) -> CovarianceSeed {
        self.seed
    }

    /// Total samples learned, base initialization included.
    pub fn learned(&self) -> u64 {
        self.learned
    }

    pub fn seen_classes(&self) -> Vec<usize> {
        self.means.seen_classes().collect()
    }

    pub fn readout(&self) -> Option<&Readout> {
        self.readout.as_ref()
    }

    pub fn is_stale(&self) -> bool {
        self.readout
            .as_ref()
            .is_none_or(|r| r.built_at != self.learned)
    }

    /// Seeds the class means from an offline base set.
    ///
    /// With a bank-seeded covariance the base set only touches means and
    /// counts, because Σ was already estimated (once, by OAS) at construction.
    /// Otherwise this is exactly [`SldaModel::learn`] applied in order.
    pub fn base_fit<Z: AsRef<[f64]>>(&mut self, samples: &[(Z, usize)]) -> Result<()> {
        for (z, y) in samples {
            self.means.check(z.as_ref(), *y)?;
        }
        for (z, y) in samples {
            if self.seed == CovarianceSeed::Bank {
                self.means.update(z.as_ref(), *y)?;
                self.learned += 1;
            } else {
                self.learn(z.as_ref(), *y)?;
            }
        }
        Ok(())
    }

    pub fn learn(&mut self, z: &[f64], y: usize) -> Result<()> {
        self.means.check(z, y)?;
        if self.covariance.mode == CovarianceMode::Plastic {
            self.covariance.update(z, self.means.mean(y));
        }
        self.means.update(z, y)?;
        self.learned += 1;
        Ok(())
    }

    fn precision(&mut self) -> Result<SymMatrix> {
        match (self.covariance.mode, &self.precision) {
            (CovarianceMode::Fixed, Some(p)) => Ok(p.clone()),
            _ => {
                let p = shrinkage_precision(&self.covariance.sigma, self.shrinkage)?;
                if self.covariance.mode == CovarianceMode::Fixed {
                    self.precision = Some(p.clone());
                }
                Ok(p)
            }
        }
    }

    /// Recomputes `W` and `b` from the current means and covariance.
    pub fn refresh_readout(&mut self) -> Result<&Readout> {
        if self.means.seen_classes().next().is_none() {
            return Err(Error::NoClassesSeen);
        }
        let precision = self.precision()?;
        let d = self.dim();
        let k = self.num_classes();
        let mut weights = vec![0.0; k * d];
        let mut bias = vec![f64::NEG_INFINITY; k];
        for c in self.means.seen_classes() {
            let mu = self.means.mean(c);
            let w = precision.mul_vec(mu);
            bias[c] = -0.5 * dot(mu, &w);
            weights[c * d..(c + 1) * d].copy_from_slice(&w);
        }
        self.readout = Some(Readout {
            dim: d,
            weights,
            bias,
            built_at: self.learned,
        });
        Ok(self.readout.as_ref().expect("just set"))
    }

    fn fresh_readout(&mut self) -> Result<&Readout> {
        if self.is_stale() {
            self.refresh_readout()
        } else {
            Ok(self.readout.as_ref().expect("not stale"))
        }
    }

    /// Ranked labels for `z`, refreshing the readout first if it is stale.
    pub fn predict(&mut self, z: &[f64], top_k: usize) -> Result<Vec<Ranked>> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let readout = self.fresh_readout()?;
        Ok(rank_by_score(&readout.scores(z), top_k))
    }

    /// Immutable, thread-shareable predictor over the current state.
    pub fn snapshot(&mut self) -> Result<SldaPredictor> {
        Ok(SldaPredictor {
            readout: self.fresh_readout()?.clone(),
        })
    }

    pub fn memory_bytes(&self) -> u64 {
        slda_memory_bytes(self.num_classes(), self.dim())
    }

    /// Serializes the learned state in the layout documented on [`SNAPSHOT_MAGIC`].
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dim();
        let k = self.num_classes();
        let mut out = Vec::with_capacity(48 + 8 * (k + k * d + d * d));
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.push(SNAPSHOT_VERSION);
        out.push(match self.covariance.mode {
            CovarianceMode::Fixed => 0,
            CovarianceMode::Plastic => 1,
        });
        out.push(match self.seed {
            CovarianceSeed::Bank => 0,
            CovarianceSeed::Ones => 1,
            CovarianceSeed::Zero => 2,
        });
        out.push(0);
        out.extend_from_slice(&(d as u64).to_le_bytes());
        out.extend_from_slice(&(k as u64).to_le_bytes());
        out.extend_from_slice(&self.shrinkage.epsilon().to_le_bytes());
        out.extend_from_slice(&self.covariance.t.to_le_bytes());
        out.extend_from_slice(&self.learned.to_le_bytes());
        for c in self.means.counts() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for v in &self.means.means {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.covariance.sigma.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        let magic = r.take(4)?;
        if magic != SNAPSHOT_MAGIC {
            return Err(Error::BadMagic {
                found: magic.to_vec(),
            });
        }
        let version = r.u8()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let mode = match r.u8()? {
            0 => CovarianceMode::Fixed,
            1 => CovarianceMode::Plastic,
            other => return Err(Error::BadShape(format!("unknown covariance mode tag {other}"))),
        };
        let seed = match r.u8()? {
            0 => CovarianceSeed::Bank,
            1 => CovarianceSeed::Ones,
            2 => CovarianceSeed::Zero,
            other => return Err(Error::BadShape(format!("unknown covariance seed tag {other}"))),
        };
        let _reserved = r.u8()?;
        let d = usize_from(r.u64()?, "dimension")?;
        let k = usize_from(r.u64()?, "class count")?;
        if d == 0 || k == 0 {
            return Err(Error::BadShape("snapshot has zero dimension or classes".into()));
        }
        let shrinkage = ShrinkageConfig::new(r.f64()?)?;
        let t = r.u64()?;
        let learned = r.u64()?;
        let cells = k
            .checked_add(k.saturating_mul(d))
            .and_then(|x| x.checked_add(d.checked_mul(d)?))
            .ok_or_else(|| Error::BadShape("declared snapshot size overflows".into()))?;
        r.require(cells, 8)?;
        let counts = (0..k).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let means = (0..k * d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let sigma = (0..d * d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            means: ClassMeans { dim: d, means, counts },
            covariance: CovarianceState {
                sigma: SymMatrix::from_row_major(d, sigma)?,
                t,
                mode,
            },
            shrinkage,
            seed,
            learned,
            readout: None,
            precision: None,
        })
    }

    pub fn save(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// Snapshot container layout, all little-endian:
///
/// | field | type |
/// |---|---|
/// | magic `SLDA` | 4 bytes |
/// | format version | u8 |
/// | mode (0 fixed, 1 plastic) | u8 |
/// | covariance seed (0 bank, 1 ones, 2 zero) | u8 |
/// | reserved | u8 |
/// | d, K | u64, u64 |
/// | ε | f64 |
/// | t, total learned | u64, u64 |
/// | counts | K × u64 |
/// | means | K × d f64, row-major |
/// | Σ | d × d f64, row-major |
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SLDA";
pub const SNAPSHOT_VERSION: u8 = 1;

/// Frozen readout that can be shared across threads.
#[derive(Debug, Clone)]
pub struct SldaPredictor {
    readout: Readout,
}

impl SldaPredictor {
    pub fn readout(&self) -> &Readout {
        &self.readout
    }

    pub fn scores(&self, z: &[f64]) -> Vec<f64> {
        self.readout.scores(z)
    }

    pub fn predict(&self, z: &[f64], top_k: usize) -> Vec<Ranked> {
        rank_by_score(&self.readout.scores(z), top_k)
    }
}

/// Storage accounted at 4 bytes per value: class means, covariance and counts.
pub fn slda_memory_bytes(num_classes: usize, dim: usize) -> u64 {
    let (k, d) = (num_classes as u64, dim as u64);
    4 * (k * d + d * d + k)
}
