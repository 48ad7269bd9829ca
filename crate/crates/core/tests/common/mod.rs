//! Independent reference implementations and fixtures shared by the
//! integration suites. Nothing here calls the library's linear algebra.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use streamlda::dataio::{synth_bank, synth_test_bank, FeatureBank, SynthSpec, WithinClassCov};
use streamlda::numerics::SymMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `A Aᵀ / d + jitter · I` for Gaussian `A`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, jitter: f64) -> SymMatrix {
    let a: Vec<Vec<f64>> = (0..d).map(|_| gaussian_vec(rng, d)).collect();
    SymMatrix::from_upper_fn(d, |i, j| {
        let s: f64 = (0..d).map(|k| a[i][k] * a[j][k]).sum();
        s / d as f64 + if i == j { jitter } else { 0.0 }
    })
}

/// Rank-deficient PSD matrix `B Bᵀ` with `B` of shape `d × r`.
pub fn random_psd(rng: &mut ChaCha8Rng, d: usize, r: usize) -> SymMatrix {
    let b: Vec<Vec<f64>> = (0..d).map(|_| gaussian_vec(rng, r)).collect();
    SymMatrix::from_upper_fn(d, |i, j| (0..r).map(|k| b[i][k] * b[j][k]).sum())
}

pub fn to_rows(m: &SymMatrix) -> Vec<Vec<f64>> {
    (0..m.dim()).map(|i| m.row(i).to_vec()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in &mut m[col] {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    let pivot_row = m[col].clone();
                    for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Literal OAS: empirical covariance with divisor `n`, then the closed-form
/// shrinkage intensity toward `tr(S)/d · I`.
pub fn oas_oracle(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n)
        .collect();
    let s: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| samples.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / n)
                .collect()
        })
        .collect();
    let df = d as f64;
    let tr: f64 = (0..d).map(|i| s[i][i]).sum();
    let tr_s2: f64 = (0..d)
        .map(|i| (0..d).map(|k| s[i][k] * s[k][i]).sum::<f64>())
        .sum();
    let num = (1.0 - 2.0 / df) * tr_s2 + tr * tr;
    let den = (n + 1.0 - 2.0 / df) * (tr_s2 - tr * tr / df);
    let rho = if den <= 0.0 { 1.0 } else { (num / den).min(1.0) };
    let mu = tr / df;
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (1.0 - rho) * s[i][j] + if i == j { rho * mu } else { 0.0 })
                .collect()
        })
        .collect()
}

/// The acceptance benchmark: 10 classes, 16 dimensions, 600 training
/// samples per class in 5 instances, anisotropic within-class noise.
pub fn benchmark_spec() -> SynthSpec {
    SynthSpec {
        seed: 2024,
        num_classes: 10,
        dim: 16,
        per_class: 600,
        instances_per_class: 5,
        class_mean_spread: 3.0,
        instance_spread: 0.5,
        within_class_cov: WithinClassCov::Anisotropic {
            min_std: 0.3,
            max_std: 3.0,
        },
    }
}

pub const BENCHMARK_TEST_PER_CLASS: usize = 100;

pub fn benchmark_banks() -> (FeatureBank, FeatureBank) {
    let spec = benchmark_spec();
    (
        synth_bank(&spec).unwrap(),
        synth_test_bank(&spec, BENCHMARK_TEST_PER_CLASS).unwrap(),
    )
}

/// Compact synthetic benchmark with instance structure.
pub fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        num_classes: 5,
        dim: 6,
        per_class: 40,
        instances_per_class: 4,
        class_mean_spread: 4.0,
        instance_spread: 0.5,
        within_class_cov: WithinClassCov::Anisotropic {
            min_std: 0.3,
            max_std: 1.5,
        },
    }
}

pub fn small_banks(seed: u64) -> (FeatureBank, FeatureBank) {
    let spec = small_spec(seed);
    (synth_bank(&spec).unwrap(), synth_test_bank(&spec, 20).unwrap())
}
