//! Dense symmetric-matrix utilities.
//!
//! Everything here works on row-major `f64` storage. [`SymMatrix`] keeps both
//! triangles and every mutator writes `(i, j)` and `(j, i)` together, so
//! symmetry is exact by construction.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default shrinkage parameter.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Shrinkage values worth sweeping when tuning on a new feature space.
pub const EPSILON_GRID: [f64; 6] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// Numerical tolerances used by checks in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative Frobenius residual allowed for `((1-eps)S + eps I) * precision - I`.
    pub precision_residual: f64,
    /// Relative residual allowed for `A x - b` after an SPD solve.
    pub solve_residual: f64,
    /// Eigenvalues of an OAS estimate may dip to `-oas_psd * tr(S) / d`.
    pub oas_psd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            precision_residual: 1e-8,
            solve_residual: 1e-10,
            oas_psd: 1e-10,
        }
    }
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for row in self.data.chunks(self.dim) {
            list.entry(&row);
        }
        list.finish()
    }
}

impl SymMatrix {
    /// # Panics
    /// If `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = value;
        }
        m
    }

    pub fn ones(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        Self {
            dim,
            data: vec![1.0; dim * dim],
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = v;
        }
        m
    }

    /// Builds a matrix from full row-major storage, rejecting anything that is
    /// not exactly symmetric.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::BadShape("matrix dimension must be at least 1".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if data[i * dim + j].to_bits() != data[j * dim + i].to_bits() {
                    return Err(Error::BadShape(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Builds a symmetric matrix from a generator evaluated on the upper triangle.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
        self.data[j * self.dim + i] = value;
    }

    /// Full row-major storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        self.data
            .chunks_exact(self.dim)
            .map(|row| dot(row, x))
            .collect()
    }

    /// Returns `a * self + b * I`.
    pub fn scaled_plus_identity(&self, a: f64, b: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= a;
        }
        for i in 0..self.dim {
            out.data[i * self.dim + i] += b;
        }
        out
    }

    /// Product of two symmetric matrices as a plain row-major square matrix.
    /// The result is generally not symmetric.
    pub fn matmul(&self, other: &SymMatrix) -> Vec<f64> {
        let d = self.dim;
        assert_eq!(d, other.dim);
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out[i * d..(i + 1) * d];
                for (o, &b) in dst.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    /// Row-major lower triangle; entries above the diagonal are zero.
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors `a`, failing with [`Error::NotSpd`] on the first non-positive
    /// (or non-finite) pivot.
    pub fn factor(a: &SymMatrix) -> Result<Self> {
        let d = a.dim();
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > 0.0 && diag.is_finite()) {
                return Err(Error::NotSpd {
                    pivot: j,
                    value: diag,
                });
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Self { dim: d, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Solves `A x = b` by forward then backward substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        assert_eq!(b.len(), d);
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * d + k] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s -= l[k * d + i] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        y
    }

    /// `A⁻¹ = L⁻ᵀ L⁻¹`, with `L⁻¹` obtained by triangular inversion.
    pub fn inverse(&self) -> SymMatrix {
        let d = self.dim;
        let l = &self.lower;
        // Row-major lower triangle of L⁻¹.
        let mut inv = vec![0.0; d * d];
        for j in 0..d {
            inv[j * d + j] = 1.0 / l[j * d + j];
            for i in (j + 1)..d {
                let mut s = 0.0;
                for k in j..i {
                    s -= l[i * d + k] * inv[k * d + j];
                }
                inv[i * d + j] = s / l[i * d + i];
            }
        }
        // (L⁻ᵀ L⁻¹)_{ij} = Σ_{k ≥ max(i,j)} inv[k][i] inv[k][j]
        let mut out = SymMatrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for k in j..d {
                    s += inv[k * d + i] * inv[k * d + j];
                }
                out.set(i, j, s);
            }
        }
        out
    }
}

/// Solves `a x = rhs` for a single right-hand side.
pub fn spd_solve(a: &SymMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: rhs.len(),
        });
    }
    Ok(Cholesky::factor(a)?.solve(rhs))
}

/// Solves `a X = rhs` where `rhs` is a row-major `d × ncols` matrix.
pub fn spd_solve_matrix(a: &SymMatrix, rhs: &[f64], ncols: usize) -> Result<Vec<f64>> {
    let d = a.dim();
    if ncols == 0 || rhs.len() != d * ncols {
        return Err(Error::DimensionMismatch {
            expected: d * ncols.max(1),
            got: rhs.len(),
        });
    }
    let chol = Cholesky::factor(a)?;
    let mut out = vec![0.0; d * ncols];
    let mut col = vec![0.0; d];
    for c in 0..ncols {
        for r in 0..d {
            col[r] = rhs[r * ncols + c];
        }
        let x = chol.solve(&col);
        for r in 0..d {
            out[r * ncols + c] = x[r];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ShrinkageConfig {
    epsilon: f64,
}

impl ShrinkageConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon <= 1.0 {
            Ok(Self { epsilon })
        } else {
            Err(Error::InvalidEpsilon(epsilon))
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(1 - eps) * sigma + eps * I`
    pub fn regularize(&self, sigma: &SymMatrix) -> SymMatrix {
        sigma.scaled_plus_identity(1.0 - self.epsilon, self.epsilon)
    }
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl TryFrom<f64> for ShrinkageConfig {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ShrinkageConfig> for f64 {
    fn from(c: ShrinkageConfig) -> f64 {
        c.epsilon
    }
}

/// Precision matrix `[(1 - eps) sigma + eps I]⁻¹`.
pub fn shrinkage_precision(sigma: &SymMatrix, cfg: ShrinkageConfig) -> Result<SymMatrix> {
    let reg = cfg.regularize(sigma);
    match Cholesky::factor(&reg) {
        Ok(chol) => Ok(chol.inverse()),
        Err(Error::NotSpd { pivot, value }) => Err(Error::RegularizedNotSpd { pivot, value }),
        Err(e) => Err(e),
    }
}

/// Relative Frobenius residual `‖reg · precision − I‖ / ‖I‖` for the
/// regularized covariance `reg = (1 - eps) sigma + eps I`.
pub fn precision_residual(sigma: &SymMatrix, cfg: ShrinkageConfig, precision: &SymMatrix) -> f64 {
    let d = sigma.dim();
    let prod = cfg.regularize(sigma).matmul(precision);
    let mut err = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            let e = prod[i * d + j] - target;
            err += e * e;
        }
    }
    err.sqrt() / (d as f64).sqrt()
}

/// Empirical covariance (mean-centred, divisor `n`).
pub fn empirical_covariance<R: AsRef<[f64]>>(samples: &[R]) -> Result<SymMatrix> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InsufficientSamples(0));
    }
    let d = samples[0].as_ref().len();
    if d == 0 {
        return Err(Error::BadShape("samples have zero dimension".into()));
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        let s = s.as_ref();
        if s.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.len(),
            });
        }
        for (m, &x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = SymMatrix::zeros(d);
    let mut centred = vec![0.0; d];
    for s in samples {
        for ((c, &x), &m) in centred.iter_mut().zip(s.as_ref()).zip(&mean) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centred[i];
            for j in i..d {
                cov.data[i * d + j] += ci * centred[j];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.data[i * d + j] * inv_n;
            cov.set(i, j, v);
        }
    }
    Ok(cov)
}

/// Oracle Approximating Shrinkage estimate of the covariance of `samples`.
///
/// Shrinks the empirical covariance `S` toward `tr(S)/d · I` with intensity
///
/// ```text
/// rho = min(1, [(1 - 2/d) tr(S²) + tr(S)²] / [(n + 1 - 2/d) (tr(S²) - tr(S)²/d)])
/// ```
///
/// and `rho = 1` whenever the denominator is not positive.
pub fn oas_covariance<R: AsRef<[f64]>>(samples: &[R]) -> Result<SymMatrix> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(n));
    }
    let s = empirical_covariance(samples)?;
    let d = s.dim() as f64;
    let tr = s.trace();
    // tr(S²) = ‖S‖_F² for symmetric S.
    let tr_sq: f64 = s.as_slice().iter().map(|v| v * v).sum();
    let rho = oas_rho(n as f64, d, tr, tr_sq);
    let target = tr / s.dim() as f64;
    Ok(s.scaled_plus_identity(1.0 - rho, rho * target))
}

fn oas_rho(n: f64, d: f64, tr: f64, tr_sq: f64) -> f64 {
    let num = (1.0 - 2.0 / d) * tr_sq + tr * tr;
    let den = (n + 1.0 - 2.0 / d) * (tr_sq - tr * tr / d);
    if den.is_nan() || den <= 0.0 {
        return 1.0;
    }
    (num / den).clamp(0.0, 1.0)
}
