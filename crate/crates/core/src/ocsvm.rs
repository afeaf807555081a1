//! Standard kernel one-class SVM.
//!
//! Dual: `min 1/2 a^T K a` over `sum(a) = 1, 0 <= a_i <= 1/(nu l)`.
//! Decision: `f(x) = sum_i a_i k(x_i, x) - b`, normal iff `f(x) >= 0`.

use alloc::vec::Vec;

use crate::kernel::{gram, kernel_unchecked, KernelParams};
use crate::qp::{kkt_violation, solve_box_simplex, QpSettings};
use crate::{Detector, Error, Label, Point, Result};

/// Default threshold on `alpha_i` for support / unbounded classification.
pub const DEFAULT_SV_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmModel {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub nu: f64,
    pub params: KernelParams,
    pub train_points: Vec<Point>,
    pub support_indices: Vec<usize>,
    /// Final KKT violation reported by the QP solver.
    pub kkt_residual: f64,
    pub objective: f64,
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::input(alloc::format!(
            "nu must lie in (0, 1], got {nu}"
        )));
    }
    Ok(())
}

pub fn train_ocsvm(
    train_points: &[Point],
    nu: f64,
    params: KernelParams,
    qp_settings: &QpSettings,
) -> Result<OcsvmModel> {
    check_nu(nu)?;
    if train_points.is_empty() {
        return Err(Error::input("training set is empty"));
    }
    let l = train_points.len();
    let k = gram(train_points, params)?;
    let upper = 1.0 / (nu * l as f64);
    let sol = solve_box_simplex(&k, upper, qp_settings)?;
    let bias = bias_from_support(&sol.alphas, train_points, params, DEFAULT_SV_TOL, nu)?;
    let support_indices = (0..l).filter(|&i| sol.alphas[i] > DEFAULT_SV_TOL).collect();
    Ok(OcsvmModel {
        kkt_residual: kkt_violation(&sol.alphas, &sol.gradient, upper),
        objective: sol.objective,
        alphas: sol.alphas,
        bias,
        nu,
        params,
        train_points: train_points.to_vec(),
        support_indices,
    })
}

/// Bias from the support vectors.
///
/// Averages `sum_j a_j k(x_j, x_sv)` over unbounded support vectors
/// (`sv_tol < a_sv < U - sv_tol`, `U = 1/(nu l)`). When every support vector
/// sits at a bound, takes the minimum of that quantity over the upper-bound
/// ones.
pub fn bias_from_support(
    alphas: &[f64],
    train_points: &[Point],
    params: KernelParams,
    sv_tol: f64,
    nu: f64,
) -> Result<f64> {
    check_nu(nu)?;
    let l = train_points.len();
    if alphas.len() != l || l == 0 {
        return Err(Error::input("alphas and training points differ in length"));
    }
    let upper = 1.0 / (nu * l as f64);
    let sum: f64 = alphas.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || alphas.iter().any(|&a| a < -1e-9 || a > upper + 1e-9) {
        return Err(Error::input("alphas violate the box-constrained simplex"));
    }
    let g = params.gamma();
    let margin = |s: usize| -> f64 {
        alphas
            .iter()
            .zip(train_points)
            .filter(|(a, _)| **a != 0.0)
            .map(|(a, x)| a * kernel_unchecked(x, &train_points[s], g))
            .sum()
    };

    let unbounded: Vec<usize> = (0..l)
        .filter(|&i| alphas[i] > sv_tol && alphas[i] < upper - sv_tol)
        .collect();
    if !unbounded.is_empty() {
        let total: f64 = unbounded.iter().map(|&s| margin(s)).sum();
        return Ok(total / unbounded.len() as f64);
    }
    (0..l)
        .filter(|&i| alphas[i] >= upper - sv_tol)
        .map(margin)
        .reduce(f64::min)
        .ok_or_else(|| Error::input("no support vectors"))
}

/// Score and label of `x`.
pub fn decide_ocsvm(model: &OcsvmModel, x: &[f64]) -> Result<(f64, Label)> {
    model.decide(x)
}

impl Detector for OcsvmModel {
    fn score(&self, x: &[f64]) -> Result<f64> {
        let dim = self.train_points[0].len();
        if x.len() != dim {
            return Err(Error::input(alloc::format!(
                "expected dimension {dim}, got {}",
                x.len()
            )));
        }
        let g = self.params.gamma();
        let s: f64 = self
            .support_indices
            .iter()
            .map(|&i| self.alphas[i] * kernel_unchecked(&self.train_points[i], x, g))
            .sum();
        Ok(s - self.bias)
    }
}
