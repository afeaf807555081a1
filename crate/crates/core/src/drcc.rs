//! Kernelized distributionally robust chance-constrained one-class SVM.
//!
//! ```text
//! min_{p, b >= 0, xi >= 0}  1/2 p^T Q p - b + 1/(l nu) sum(xi)
//! s.t.  r |Sigma_K^(i)^1/2 p| <= p^T kbar_i + xi_i - b
//! ```
//!
//! with `Q = K + jitter I` and `r = sqrt((1 - alpha) / alpha)`. Decision:
//! `f(x) = sum_s p_s k(x_s, x) - b`, normal iff `f(x) >= 0`.
//!
//! The problem is solved in the eigenbasis of `Q`: with `Q = U L U^T` and
//! `z = L^1/2 U^T p` the objective becomes `1/2 |z|^2` and every constraint
//! is expressed through `d_i = L^-1/2 U^T kbar_i` and `L^-1/2 U^T F_i^T`.
//! Directions along which all the data vanish are dropped; the optimal `z`
//! is zero there. The reduction depends only on the kernel bundle, so one
//! reduction serves every `(alpha, nu)`.

use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::kernel::{build_gram_bundle, factor_sqrt, kernel_unchecked, GramBundle, KernelParams};
use crate::rng;
use crate::socp::{solve_socp, IpmSettings, IpmStatus, SocpData};
use crate::uncertainty::SampleSet;
use crate::{Detector, Error, Label, Point, Result};

/// Diagonal jitter added to the Gram matrix in the quadratic objective.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Rows of the reduced data below this fraction of the largest entry are
/// treated as zero.
const DROP_TOL: f64 = 1e-12;

/// Ellipsoid radius `sqrt((1 - alpha) / alpha)` for error level `alpha`.
pub fn chebyshev_radius(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(alloc::format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(libm::sqrt((1.0 - alpha) / alpha))
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::input(alloc::format!(
            "nu must lie in (0, 1], got {nu}"
        )));
    }
    Ok(())
}

/// Eigen-reduced form of the constraint data for one kernel bundle.
#[derive(Debug, Clone)]
pub struct ReducedSocp {
    data: SocpData,
    /// `U_keep L_keep^-1/2`, maps reduced `z` back to `p`.
    basis: DMatrix<f64>,
    jitter: f64,
}

impl ReducedSocp {
    pub fn new(bundle: &GramBundle, jitter: f64) -> Result<Self> {
        if !(jitter > 0.0) {
            return Err(Error::input("jitter must be positive"));
        }
        let m = bundle.num_samples();
        let l = bundle.num_points();
        let mut q = bundle.gram().clone();
        for j in 0..m {
            q[(j, j)] += jitter;
        }
        let eig = SymmetricEigen::new(q);
        let inv_sqrt: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&v| 1.0 / libm::sqrt(v.max(0.5 * jitter)))
            .collect();

        let mut ka = DMatrix::zeros(m, l);
        for (i, kb) in bundle.kbar().iter().enumerate() {
            ka.set_column(i, kb);
        }
        let rows: usize = bundle.cov_factors().iter().map(|f| f.nrows()).sum();
        let mut ft = DMatrix::zeros(m, rows);
        let mut block_rows = Vec::with_capacity(l);
        let mut off = 0;
        for f in bundle.cov_factors() {
            let r = f.nrows();
            ft.columns_mut(off, r).copy_from(&f.transpose());
            block_rows.push(off..off + r);
            off += r;
        }
        let mut td = eig.eigenvectors.tr_mul(&ka);
        let mut tf = eig.eigenvectors.tr_mul(&ft);
        for j in 0..m {
            td.row_mut(j).scale_mut(inv_sqrt[j]);
            tf.row_mut(j).scale_mut(inv_sqrt[j]);
        }
        let amax = td
            .iter()
            .chain(tf.iter())
            .fold(0.0f64, |a, &v| a.max(v.abs()));
        let keep: Vec<usize> = (0..m)
            .filter(|&j| {
                let rmax = td
                    .row(j)
                    .iter()
                    .chain(tf.row(j).iter())
                    .fold(0.0f64, |a, &v| a.max(v.abs()));
                rmax > DROP_TOL * amax
            })
            .collect();
        let n = keep.len().max(1);
        let mut d = DMatrix::zeros(n, l);
        let mut blocks = DMatrix::zeros(rows, n);
        let mut basis = DMatrix::zeros(m, n);
        for (c, &j) in keep.iter().enumerate() {
            d.row_mut(c).copy_from(&td.row(j));
            blocks.column_mut(c).copy_from(&tf.row(j).transpose());
            basis
                .column_mut(c)
                .copy_from(&(eig.eigenvectors.column(j) * inv_sqrt[j]));
        }
        Ok(Self {
            data: SocpData::new(d, blocks, block_rows)?,
            basis,
            jitter,
        })
    }

    /// Dimension of the reduced variable.
    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn data(&self) -> &SocpData {
        &self.data
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn to_p(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.basis * z
    }
}

/// The robust SOCP for one bundle and one `(radius, nu)`.
#[derive(Debug, Clone)]
pub struct SocpProblem {
    bundle: Arc<GramBundle>,
    reduced: Arc<ReducedSocp>,
    radius: f64,
    nu: f64,
}

/// Assemble the SOCP for error level `alpha` and regularization `nu`.
pub fn assemble_problem(bundle: Arc<GramBundle>, alpha: f64, nu: f64) -> Result<SocpProblem> {
    let reduced = Arc::new(ReducedSocp::new(&bundle, DEFAULT_JITTER)?);
    SocpProblem::from_reduced(bundle, reduced, chebyshev_radius(alpha)?, nu)
}

impl SocpProblem {
    /// Problem sharing a precomputed reduction. `radius` may be zero (the
    /// non-robust limit).
    pub fn from_reduced(
        bundle: Arc<GramBundle>,
        reduced: Arc<ReducedSocp>,
        radius: f64,
        nu: f64,
    ) -> Result<Self> {
        check_nu(nu)?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::input("radius must be finite and non-negative"));
        }
        if reduced.basis.nrows() != bundle.num_samples()
            || reduced.data.num_constraints() != bundle.num_points()
        {
            return Err(Error::input("reduction does not match the bundle"));
        }
        Ok(Self {
            bundle,
            reduced,
            radius,
            nu,
        })
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::from_reduced(self.bundle.clone(), self.reduced.clone(), self.radius, nu)
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::from_reduced(self.bundle.clone(), self.reduced.clone(), radius, self.nu)
    }

    pub fn bundle(&self) -> &Arc<GramBundle> {
        &self.bundle
    }

    pub fn reduced(&self) -> &Arc<ReducedSocp> {
        &self.reduced
    }

    /// Jittered Gram matrix of the objective.
    pub fn q(&self) -> DMatrix<f64> {
        let mut q = self.bundle.gram().clone();
        for j in 0..q.nrows() {
            q[(j, j)] += self.reduced.jitter;
        }
        q
    }

    pub fn kbar(&self) -> &[DVector<f64>] {
        self.bundle.kbar()
    }

    /// Dense `Sigma_K^(i)^1/2`.
    pub fn sqrt_sigma_k(&self, i: usize) -> DMatrix<f64> {
        self.bundle.sigma_k_sqrt(i)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn l(&self) -> usize {
        self.bundle.num_points()
    }

    pub fn m(&self) -> usize {
        self.bundle.num_samples()
    }

    /// Slack weight `1 / (l nu)`.
    pub fn slack_weight(&self) -> f64 {
        1.0 / (self.l() as f64 * self.nu)
    }

    /// `1/2 p^T Q p - b + c sum(xi)`.
    pub fn objective(&self, p: &DVector<f64>, b: f64, xi: &[f64]) -> f64 {
        let qp = self.bundle.gram() * p + p * self.reduced.jitter;
        0.5 * p.dot(&qp) - b + self.slack_weight() * xi.iter().sum::<f64>()
    }

    /// `p^T kbar_i + xi_i - b - r |F_i p|` for every constraint; negative
    /// entries are violations.
    pub fn constraint_slacks(&self, p: &DVector<f64>, b: f64, xi: &[f64]) -> Vec<f64> {
        (0..self.l())
            .map(|i| {
                let fp = self.bundle.cov_factor(i) * p;
                p.dot(&self.bundle.kbar()[i]) + xi[i] - b - self.radius * fp.norm()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone)]
pub struct DrccSolution {
    pub p: DVector<f64>,
    pub bias: f64,
    pub xi: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the cone constraints.
    pub dual_gamma: Vec<f64>,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub iterations: usize,
}

/// Solve an assembled problem.
pub fn solve(problem: &SocpProblem, settings: &IpmSettings) -> Result<DrccSolution> {
    let r = solve_socp(
        problem.reduced.data(),
        problem.radius,
        problem.slack_weight(),
        settings,
    )?;
    let p = problem.reduced.to_p(&r.z);
    let status = match r.status {
        IpmStatus::Optimal => SolveStatus::Optimal,
        IpmStatus::MaxIter => SolveStatus::MaxIter,
        IpmStatus::Infeasible => SolveStatus::Infeasible,
    };
    Ok(DrccSolution {
        objective: problem.objective(&p, r.b, &r.xi),
        p,
        bias: r.b,
        xi: r.xi,
        dual_gamma: r.gamma,
        status,
        residuals: Residuals {
            primal: r.primal_residual,
            dual: r.dual_residual,
            gap: r.gap,
            relative_gap: r.relative_gap,
        },
        iterations: r.iterations,
    })
}

/// A solved, decision-ready model.
#[derive(Debug, Clone)]
pub struct DrccModel {
    pub solution: DrccSolution,
    pub samples: SampleSet,
    pub params: KernelParams,
    pub alpha: f64,
    pub nu: f64,
    pooled: Vec<Point>,
    problem: SocpProblem,
}

impl DrccModel {
    pub fn new(
        problem: SocpProblem,
        solution: DrccSolution,
        samples: SampleSet,
        params: KernelParams,
        alpha: f64,
    ) -> Result<Self> {
        if solution.status != SolveStatus::Optimal {
            return Err(Error::State(alloc::format!(
                "solution is not optimal ({:?})",
                solution.status
            )));
        }
        if samples.total() != problem.m() || solution.p.len() != problem.m() {
            return Err(Error::input("samples do not match the problem"));
        }
        Ok(Self {
            pooled: samples.pooled().cloned().collect(),
            nu: problem.nu,
            solution,
            samples,
            params,
            alpha,
            problem,
        })
    }

    pub fn problem(&self) -> &SocpProblem {
        &self.problem
    }

    pub fn pooled_samples(&self) -> &[Point] {
        &self.pooled
    }
}

/// Build the bundle, solve, and wrap into a model.
pub fn train_drcc(
    samples: &SampleSet,
    params: KernelParams,
    alpha: f64,
    nu: f64,
    settings: &IpmSettings,
) -> Result<DrccModel> {
    let bundle = Arc::new(build_gram_bundle(
        samples,
        params,
        crate::kernel::DEFAULT_EPS_PSD,
    )?);
    let problem = assemble_problem(bundle, alpha, nu)?;
    let solution = solve(&problem, settings)?;
    if solution.status != SolveStatus::Optimal {
        return Err(Error::Solver {
            iterations: solution.iterations,
            residual: solution.residuals.primal.max(solution.residuals.dual),
            reason: alloc::format!("robust SOCP ended with status {:?}", solution.status),
        });
    }
    DrccModel::new(problem, solution, samples.clone(), params, alpha)
}

impl Detector for DrccModel {
    fn score(&self, x: &[f64]) -> Result<f64> {
        let dim = self.samples.dim();
        if x.len() != dim {
            return Err(Error::input(alloc::format!(
                "expected dimension {dim}, got {}",
                x.len()
            )));
        }
        let g = self.params.gamma();
        let s: f64 = self
            .pooled
            .iter()
            .zip(self.solution.p.iter())
            .map(|(xs, p)| p * kernel_unchecked(xs, x, g))
            .sum();
        Ok(s - self.solution.bias)
    }
}

pub fn decide_drcc(model: &DrccModel, x: &[f64]) -> Result<(f64, Label)> {
    model.decide(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustCheckReport {
    pub probes: usize,
    /// Largest `b - xi_i - p^T z` over the probes (positive is a violation).
    pub max_violation: f64,
    /// Probes violating by more than `1e-6`.
    pub violations: usize,
    /// `|p^T z(u*) - (p^T kbar_i - r |S_i p|)|` at the supporting direction.
    pub tightness: f64,
    /// `p^T z(u*) - (b - xi_i)`: zero when the constraint is active.
    pub support_slack: f64,
}

/// Probe the kernel-space ellipsoid `kbar_i + r S_i u`, `|u| <= 1`.
///
/// Half the probes are on the boundary, half inside. The center and the
/// supporting direction `-S_i p / |S_i p|` are always included.
pub fn robust_constraint_check(
    model: &DrccModel,
    i: usize,
    n_probe: usize,
    seed: u64,
) -> Result<RobustCheckReport> {
    let prob = &model.problem;
    if i >= prob.l() {
        return Err(Error::input("constraint index out of range"));
    }
    let sol = &model.solution;
    let p = &sol.p;
    let kb = &prob.kbar()[i];
    let s = factor_sqrt(prob.bundle.cov_factor(i), prob.bundle.eps_psd());
    let r = prob.radius;
    let floor = sol.bias - sol.xi[i];
    let pk = p.dot(kb);
    let sp = s.tr_mul(p);
    let m = p.len();

    let mut worst = floor - pk;
    let mut violations = usize::from(worst > 1e-6);
    let mut rng = rng::stream(seed, i as u64);
    for t in 0..n_probe {
        let mut u: DVector<f64> = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let norm = u.norm();
        if norm > 0.0 {
            u /= norm;
        }
        if t % 2 == 1 {
            let rad: f64 = rng.random::<f64>();
            u *= libm::pow(rad, 1.0 / m as f64);
        }
        let v = floor - (pk + r * sp.dot(&u));
        worst = worst.max(v);
        violations += usize::from(v > 1e-6);
    }

    let spn = sp.norm();
    let mut ustar = DVector::zeros(m);
    if spn > 0.0 {
        ustar = -&sp / spn;
    }
    let z = kb + (&s * &ustar) * r;
    let pz = p.dot(&z);
    let v = floor - pz;
    worst = worst.max(v);
    violations += usize::from(v > 1e-6);
    Ok(RobustCheckReport {
        probes: n_probe + 2,
        max_violation: worst,
        violations,
        tightness: (pz - (pk - r * spn)).abs(),
        support_slack: pz - floor,
    })
}

/// Constraints whose multiplier exceeds `tol`.
pub fn support_ellipsoids(model: &DrccModel, tol: f64) -> Result<Vec<usize>> {
    let g = &model.solution.dual_gamma;
    if g.len() != model.problem.l() {
        return Err(Error::State("solution carries no cone multipliers".into()));
    }
    Ok((0..g.len()).filter(|&i| g[i] > tol).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `|sum(gamma) - 1|`.
    pub sum_gamma: f64,
    /// Largest violation of `0 <= gamma_i <= 1/(l nu)`.
    pub gamma_box: f64,
    /// `max_i |gamma_i * slack_i|`.
    pub complementary: f64,
    /// `max_i |(1/(l nu) - gamma_i) xi_i|`.
    pub xi_complementary: f64,
    /// Largest cone-constraint violation, `max_i -slack_i` (clipped at 0).
    pub soc_violation: f64,
    /// Most negative of `b` and the `xi_i`, clipped at 0.
    pub sign_violation: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.sum_gamma
            .max(self.gamma_box)
            .max(self.complementary)
            .max(self.xi_complementary)
            .max(self.soc_violation)
            .max(self.sign_violation)
    }
}

pub fn kkt_report(model: &DrccModel) -> KktReport {
    kkt_report_for(&model.problem, &model.solution)
}

/// KKT residuals of an arbitrary (possibly perturbed) solution.
pub fn kkt_report_for(problem: &SocpProblem, sol: &DrccSolution) -> KktReport {
    let c = problem.slack_weight();
    let slacks = problem.constraint_slacks(&sol.p, sol.bias, &sol.xi);
    let g = &sol.dual_gamma;
    let mut rep = KktReport {
        sum_gamma: (g.iter().sum::<f64>() - 1.0).abs(),
        gamma_box: 0.0,
        complementary: 0.0,
        xi_complementary: 0.0,
        soc_violation: 0.0,
        sign_violation: (-sol.bias).max(0.0),
    };
    for i in 0..g.len() {
        rep.gamma_box = rep.gamma_box.max(-g[i]).max(g[i] - c);
        rep.complementary = rep.complementary.max((g[i] * slacks[i]).abs());
        rep.xi_complementary = rep.xi_complementary.max(((c - g[i]) * sol.xi[i]).abs());
        rep.soc_violation = rep.soc_violation.max(-slacks[i]);
        rep.sign_violation = rep.sign_violation.max(-sol.xi[i]);
    }
    rep
}

/// Value of the non-robust problem (`r = 0`) through its dual, a
/// box-simplex QP in `gamma` with matrix `K_a^T Q^-1 K_a`. Used as an
/// independent check of the conic solver.
pub fn nonrobust_dual_value(problem: &SocpProblem) -> Result<f64> {
    let l = problem.l();
    let m = problem.m();
    let chol =
        Cholesky::new(problem.q()).ok_or_else(|| Error::numerical("Q is not positive definite"))?;
    let mut ka = DMatrix::zeros(m, l);
    for (i, kb) in problem.kbar().iter().enumerate() {
        ka.set_column(i, kb);
    }
    let x = chol.solve(&ka);
    let mut mm = ka.tr_mul(&x);
    mm = (&mm + mm.transpose()) * 0.5;
    let sol = crate::qp::solve_box_simplex(
        &mm,
        problem.slack_weight(),
        &crate::qp::QpSettings {
            tol: 1e-12,
            max_iter: 1_000_000,
        },
    )?;
    Ok(-sol.objective)
}
