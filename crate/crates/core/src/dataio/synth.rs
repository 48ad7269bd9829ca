//! Seeded synthetic feature banks.
//!
//! Class means sit on a sphere of radius `class_mean_spread`. Each class owns
//! `instances_per_class` instances whose sub-means are Gaussian perturbations
//! of the class mean, and every frame is a Gaussian draw around its instance
//! sub-mean with a within-class covariance shared by all classes. Rows are
//! laid out class-major, then by instance, then by frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::FeatureBank;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WithinClassCov {
    /// `std² · I`
    Isotropic { std: f64 },
    /// Per-axis standard deviations log-spaced from `min_std` to `max_std`,
    /// rotated by a seeded random orthogonal matrix.
    Anisotropic { min_std: f64, max_std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub instances_per_class: usize,
    pub class_mean_spread: f64,
    #[serde(default)]
    pub instance_spread: f64,
    pub within_class_cov: WithinClassCov,
}

/// Shared structure drawn once per seed; train and test banks sample from it.
struct Structure {
    /// `K·m` instance sub-means, class-major.
    instance_means: Vec<Vec<f64>>,
    /// Row-major `d × d` noise transform.
    noise: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    // Gram-Schmidt on Gaussian rows; redraw the rare near-dependent row.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v = gaussian(rng, d);
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

impl SynthSpec {
    fn check(&self, per_class: usize) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 || per_class == 0 || self.instances_per_class == 0 {
            return Err(Error::BadShape(
                "num_classes, dim, per_class and instances_per_class must all be >= 1".into(),
            ));
        }
        if !per_class.is_multiple_of(self.instances_per_class) {
            return Err(Error::BadShape(format!(
                "per_class {per_class} not divisible by instances_per_class {}",
                self.instances_per_class
            )));
        }
        let bad_std = match self.within_class_cov {
            WithinClassCov::Isotropic { std } => !(std >= 0.0 && std.is_finite()),
            WithinClassCov::Anisotropic { min_std, max_std } => {
                !(min_std > 0.0 && max_std >= min_std && max_std.is_finite())
            }
        };
        if bad_std || self.class_mean_spread.is_nan() || self.class_mean_spread < 0.0 || self.instance_spread.is_nan() || self.instance_spread < 0.0 {
            return Err(Error::BadShape("spreads and standard deviations must be non-negative".into()));
        }
        Ok(())
    }

    fn structure(&self) -> Structure {
        let d = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut instance_means = Vec::with_capacity(self.num_classes * self.instances_per_class);
        let class_means: Vec<Vec<f64>> = (0..self.num_classes)
            .map(|_| {
                let v = gaussian(&mut rng, d);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.into_iter().map(|x| x / norm * self.class_mean_spread).collect()
            })
            .collect();
        for mean in &class_means {
            for _ in 0..self.instances_per_class {
                let offset = gaussian(&mut rng, d);
                instance_means.push(
                    mean.iter()
                        .zip(offset)
                        .map(|(m, o)| m + self.instance_spread * o)
                        .collect(),
                );
            }
        }
        let noise = match self.within_class_cov {
            WithinClassCov::Isotropic { std } => {
                let mut a = vec![0.0; d * d];
                for i in 0..d {
                    a[i * d + i] = std;
                }
                a
            }
            WithinClassCov::Anisotropic { min_std, max_std } => {
                let rot = random_orthogonal(&mut rng, d);
                let stds: Vec<f64> = (0..d)
                    .map(|i| {
                        let f = if d == 1 { 0.0 } else { i as f64 / (d - 1) as f64 };
                        (min_std.ln() + f * (max_std.ln() - min_std.ln())).exp()
                    })
                    .collect();
                // A = Rᵀ diag(stds), so A Aᵀ = Rᵀ diag(stds²) R.
                let mut a = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        a[i * d + j] = rot[j][i] * stds[j];
                    }
                }
                a
            }
        };
        Structure {
            instance_means,
            noise,
        }
    }

    fn sample(&self, per_class: usize, stream: u64) -> Result<FeatureBank> {
        self.check(per_class)?;
        let structure = self.structure();
        let d = self.dim;
        let m = self.instances_per_class;
        let frames = per_class / m;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);

        let n = self.num_classes * per_class;
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut instance_ids = Vec::with_capacity(n);
        let mut frame_indices = Vec::with_capacity(n);
        for k in 0..self.num_classes {
            for j in 0..m {
                let id = k * m + j;
                let mean = &structure.instance_means[id];
                for f in 0..frames {
                    let g = gaussian(&mut rng, d);
                    for r in 0..d {
                        let row = &structure.noise[r * d..(r + 1) * d];
                        let noise: f64 = row.iter().zip(&g).map(|(a, b)| a * b).sum();
                        features.push((mean[r] + noise) as f32);
                    }
                    labels.push(k as u32);
                    instance_ids.push(id as i32);
                    frame_indices.push(f as i32);
                }
            }
        }
        FeatureBank::new(
            d,
            self.num_classes,
            features,
            labels,
            Some(instance_ids),
            Some(frame_indices),
            None,
        )
    }
}

/// Training bank with `spec.per_class` rows per class.
pub fn synth_bank(spec: &SynthSpec) -> Result<FeatureBank> {
    spec.sample(spec.per_class, 1)
}

/// Held-out bank drawn from the same class and instance structure as
/// [`synth_bank`] with an independent noise stream.
pub fn synth_test_bank(spec: &SynthSpec, per_class: usize) -> Result<FeatureBank> {
    spec.sample(per_class, 2)
}
