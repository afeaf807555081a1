//! Gaussian kernel and the kernel-space moment machinery.
//!
//! Samples for all training points are pooled in a canonical order
//! (point-major, sample-minor). For point `i` with samples `x^(i_1..i_mi)`:
//!
//! - `kbar[i]` is the average of the pooled Gram columns of its samples,
//! - `sigma_k(i)` is the empirical covariance of those columns around
//!   `kbar[i]`, an `m x m` PSD matrix of rank at most `m_i - 1`.
//!
//! The covariance operators are stored as factors `F_i` (`m_i x m`) with
//! `F_i^T F_i = sigma_k(i)`; dense matrices and square roots are materialized
//! on request.

use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::uncertainty::SampleSet;
use crate::{Error, Result};

/// Default tolerance for clipping small negative eigenvalues.
pub const DEFAULT_EPS_PSD: f64 = 1e-10;

/// Width parameter of the Gaussian kernel `exp(-gamma * |x - y|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    gamma: f64,
}

impl KernelParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::input(alloc::format!(
                "kernel gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Gaussian kernel value between two points.
pub fn gaussian_kernel(x: &[f64], y: &[f64], params: KernelParams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::input(alloc::format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(kernel_unchecked(x, y, params.gamma))
}

#[inline]
pub(crate) fn kernel_unchecked(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    libm::exp(-gamma * d2)
}

/// Kernel matrix between two point lists (`a.len() x b.len()`).
pub fn cross_gram(a: &[Vec<f64>], b: &[Vec<f64>], params: KernelParams) -> Result<DMatrix<f64>> {
    let dim = a.first().or(b.first()).map_or(0, |p| p.len());
    if a.iter().chain(b).any(|p| p.len() != dim) {
        return Err(Error::input("points have inconsistent dimensions"));
    }
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        kernel_unchecked(&a[i], &b[j], params.gamma)
    }))
}

/// Symmetric Gram matrix of a point list.
pub fn gram(points: &[Vec<f64>], params: KernelParams) -> Result<DMatrix<f64>> {
    let n = points.len();
    let dim = points.first().map_or(0, |p| p.len());
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::input("points have inconsistent dimensions"));
    }
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = 1.0;
        for i in (j + 1)..n {
            let v = kernel_unchecked(&points[i], &points[j], params.gamma);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Pooled Gram matrix, kernel mean vectors and covariance operators.
#[derive(Debug, Clone)]
pub struct GramBundle {
    gram: DMatrix<f64>,
    kbar: Vec<DVector<f64>>,
    factors: Vec<DMatrix<f64>>,
    sample_index: Vec<Range<usize>>,
    eps_psd: f64,
}

/// Build the Gram bundle for a sample set.
pub fn build_gram_bundle(
    samples: &SampleSet,
    params: KernelParams,
    eps_psd: f64,
) -> Result<GramBundle> {
    if samples.per_point().iter().any(|s| s.is_empty()) {
        return Err(Error::input(
            "every training point needs at least one sample",
        ));
    }
    let pooled: Vec<Vec<f64>> = samples.pooled().cloned().collect();
    let gram = gram(&pooled, params)?;
    let m = pooled.len();
    let sample_index = samples.ranges();

    let mut kbar = Vec::with_capacity(sample_index.len());
    let mut factors = Vec::with_capacity(sample_index.len());
    for range in &sample_index {
        let mi = range.len();
        let mut mean = DVector::zeros(m);
        for t in range.clone() {
            mean += gram.column(t);
        }
        mean /= mi as f64;

        let scale = 1.0 / libm::sqrt(mi as f64);
        let mut f = DMatrix::zeros(mi, m);
        for (row, t) in range.clone().enumerate() {
            for s in 0..m {
                f[(row, s)] = (gram[(s, t)] - mean[s]) * scale;
            }
        }
        kbar.push(mean);
        factors.push(f);
    }

    Ok(GramBundle {
        gram,
        kbar,
        factors,
        sample_index,
        eps_psd,
    })
}

impl GramBundle {
    /// Pooled kernel matrix over all `m` samples.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn kbar(&self) -> &[DVector<f64>] {
        &self.kbar
    }

    /// Factor `F_i` with `F_i^T F_i = sigma_k(i)`.
    pub fn cov_factor(&self, i: usize) -> &DMatrix<f64> {
        &self.factors[i]
    }

    pub fn cov_factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn sample_index(&self) -> &[Range<usize>] {
        &self.sample_index
    }

    /// Number of training points (constraints).
    pub fn num_points(&self) -> usize {
        self.kbar.len()
    }

    /// Total number of pooled samples.
    pub fn num_samples(&self) -> usize {
        self.gram.nrows()
    }

    pub fn eps_psd(&self) -> f64 {
        self.eps_psd
    }

    /// Dense covariance operator `Sigma_K^(i)`.
    pub fn sigma_k(&self, i: usize) -> DMatrix<f64> {
        let f = &self.factors[i];
        f.transpose() * f
    }

    /// Principal square root of `Sigma_K^(i)`.
    ///
    /// Computed through the thin factor: with `F = V S U^T`, the root is
    /// `U S U^T = F^T V S^-1 V^T F`. Only an `m_i x m_i` eigenproblem is
    /// solved.
    pub fn sigma_k_sqrt(&self, i: usize) -> DMatrix<f64> {
        factor_sqrt(&self.factors[i], self.eps_psd)
    }
}

/// Square root of `F^T F` from its factor.
pub(crate) fn factor_sqrt(f: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let small = f * f.transpose();
    let eig = SymmetricEigen::new(small);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let m = f.ncols();
    let mut out = DMatrix::zeros(m, m);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= eps * scale {
            continue;
        }
        // u_k = F^T v_k / sqrt(lambda); contribution sqrt(lambda) u_k u_k^T
        let u = f.tr_mul(&eig.eigenvectors.column(k)) / libm::sqrt(lambda);
        out.ger(libm::sqrt(lambda), &u, &u, 1.0);
    }
    out
}

/// Principal square root of a symmetric PSD matrix.
///
/// Eigenvalues below `eps_psd` (relative to the spectral scale, floored at 1)
/// are clipped to zero; anything more negative than `-eps_psd` is an error.
pub fn psd_sqrt(m: &DMatrix<f64>, eps_psd: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::input("psd_sqrt needs a square matrix"));
    }
    let n = m.nrows();
    let amax = m.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * amax.max(1.0) {
                return Err(Error::input("matrix is not symmetric"));
            }
        }
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let tol = eps_psd * scale;
    let min = eig.eigenvalues.min();
    if min < -tol {
        return Err(Error::numerical(alloc::format!(
            "matrix not PSD within tolerance (smallest eigenvalue {min:e})"
        )));
    }
    let roots = eig
        .eigenvalues
        .map(|v| if v < tol { 0.0 } else { libm::sqrt(v) });
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}
