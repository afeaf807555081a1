//! Solver for the box-constrained simplex QP
//!
//! ```text
//! min 1/2 a^T K a   s.t.   sum(a) = 1,   0 <= a_i <= upper
//! ```
//!
//! which is the one-class SVM dual. Sequential minimal optimization with
//! second-order working-set selection; each step moves mass between two
//! coordinates and keeps the iterate feasible.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Stop when the maximal KKT violation falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSimplexSolution {
    pub alphas: Vec<f64>,
    /// `K a`.
    pub gradient: Vec<f64>,
    pub objective: f64,
    pub kkt_violation: f64,
    pub iterations: usize,
}

/// Maximal violating pair gap `max_{a_i < U} -g_i - min_{a_j > 0} -g_j`,
/// clipped at zero. Zero exactly at a KKT point.
pub fn kkt_violation(alphas: &[f64], gradient: &[f64], upper: f64) -> f64 {
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for (&a, &g) in alphas.iter().zip(gradient) {
        if a < upper {
            up = up.max(-g);
        }
        if a > 0.0 {
            low = low.min(-g);
        }
    }
    if up.is_finite() && low.is_finite() {
        (up - low).max(0.0)
    } else {
        0.0
    }
}

pub fn solve_box_simplex(
    k: &DMatrix<f64>,
    upper: f64,
    settings: &QpSettings,
) -> Result<BoxSimplexSolution> {
    let l = k.nrows();
    if l == 0 || !k.is_square() {
        return Err(Error::input("QP needs a non-empty square matrix"));
    }
    if !(upper > 0.0) || upper * (l as f64) < 1.0 - 1e-12 {
        return Err(Error::input(alloc::format!(
            "box bound {upper} makes the simplex infeasible for {l} variables"
        )));
    }

    let mut alphas = alloc::vec![0.0; l];
    let mut remaining = 1.0f64;
    for a in alphas.iter_mut() {
        if remaining <= 0.0 {
            break;
        }
        *a = remaining.min(upper);
        remaining -= *a;
    }
    let mut grad: Vec<f64> = (0..l)
        .map(|i| (0..l).map(|j| k[(i, j)] * alphas[j]).sum())
        .collect();

    let mut iterations = 0;
    loop {
        // i: most promising coordinate to increase
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..l {
            if alphas[t] < upper && -grad[t] >= gmax {
                if -grad[t] > gmax || i == usize::MAX {
                    i = t;
                }
                gmax = gmax.max(-grad[t]);
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..l {
            if alphas[t] <= 0.0 {
                continue;
            }
            gmin = gmin.min(-grad[t]);
            if i == usize::MAX {
                continue;
            }
            let b = gmax + grad[t];
            if b > 0.0 {
                let mut a = k[(i, i)] + k[(t, t)] - 2.0 * k[(i, t)];
                if a <= 0.0 {
                    a = TAU;
                }
                let score = -(b * b) / a;
                if score < best {
                    best = score;
                    j = t;
                }
            }
        }
        let violation = if i == usize::MAX || !gmin.is_finite() {
            0.0
        } else {
            (gmax - gmin).max(0.0)
        };
        if violation <= settings.tol || j == usize::MAX {
            let objective = 0.5 * alphas.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
            return Ok(BoxSimplexSolution {
                kkt_violation: kkt_violation(&alphas, &grad, upper),
                alphas,
                gradient: grad,
                objective,
                iterations,
            });
        }
        if iterations >= settings.max_iter {
            return Err(Error::Solver {
                iterations,
                residual: violation,
                reason: "box-simplex QP hit the iteration cap".into(),
            });
        }
        iterations += 1;

        let mut a = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
        if a <= 0.0 {
            a = TAU;
        }
        let mut delta = (grad[j] - grad[i]) / a;
        delta = delta.min(upper - alphas[i]).min(alphas[j]);
        if delta <= 0.0 {
            // numerically stalled pair; treat as converged at current accuracy
            let objective = 0.5 * alphas.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
            return Ok(BoxSimplexSolution {
                kkt_violation: kkt_violation(&alphas, &grad, upper),
                alphas,
                gradient: grad,
                objective,
                iterations,
            });
        }
        alphas[i] += delta;
        alphas[j] -= delta;
        if upper - alphas[i] < 1e-15 {
            alphas[i] = upper;
        }
        if alphas[j] < 1e-15 {
            alphas[j] = 0.0;
        }
        for t in 0..l {
            grad[t] += delta * (k[(t, i)] - k[(t, j)]);
        }
    }
}
