//! Primal-dual interior-point solver for the robust margin SOCP
//!
//! ```text
//! min  1/2 |z|^2 - b + c sum(xi)
//! s.t. r |B_i z| <= d_i^T z - b + xi_i     i = 1..l
//!      b >= 0, xi >= 0
//! ```
//!
//! in the conic form `min 1/2 x^T P x + q^T x  s.t.  G x + s = 0, s in K`
//! with `x = (z, b, xi)`. `K` is a nonnegative orthant of size `1 + l`
//! (for `b` and `xi`) followed by one second-order cone per constraint.
//!
//! Nesterov-Todd scaling with a Mehrotra predictor-corrector. The Newton
//! system is reduced to the `(z, b)` block by eliminating `xi`, whose
//! coupling is diagonal.

use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Structured data: `d` is `n x l` (column `i` is `d_i`), `blocks` stacks the
/// `B_i` row-wise (`block_rows[i]` are the rows of `B_i`).
#[derive(Debug, Clone)]
pub struct SocpData {
    d: DMatrix<f64>,
    blocks: DMatrix<f64>,
    block_rows: Vec<Range<usize>>,
}

impl SocpData {
    pub fn new(
        d: DMatrix<f64>,
        blocks: DMatrix<f64>,
        block_rows: Vec<Range<usize>>,
    ) -> Result<Self> {
        let l = d.ncols();
        if block_rows.len() != l {
            return Err(Error::input("one cone block per constraint is required"));
        }
        if l == 0 {
            return Err(Error::input("no constraints"));
        }
        if blocks.ncols() != d.nrows() {
            return Err(Error::input(
                "block width does not match the variable dimension",
            ));
        }
        let mut next = 0;
        for r in &block_rows {
            if r.start != next {
                return Err(Error::input("cone blocks must be contiguous"));
            }
            next = r.end;
        }
        if next != blocks.nrows() {
            return Err(Error::input("cone blocks do not cover the stacked matrix"));
        }
        if d.iter().chain(blocks.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite problem data"));
        }
        Ok(Self {
            d,
            blocks,
            block_rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.d.ncols()
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn blocks(&self) -> &DMatrix<f64> {
        &self.blocks
    }

    pub fn block_rows(&self) -> &[Range<usize>] {
        &self.block_rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings {
    /// Target for primal and dual residuals.
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
    /// Residual level accepted when the iteration stops short of the
    /// targets; the best such iterate is returned.
    pub contract_tol: f64,
    pub max_iter: usize,
    pub step: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            feastol: 1e-8,
            abstol: 1e-8,
            reltol: 1e-8,
            contract_tol: 1e-6,
            max_iter: 200,
            step: 0.99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub z: DVector<f64>,
    pub b: f64,
    pub xi: Vec<f64>,
    /// First component of each cone multiplier.
    pub gamma: Vec<f64>,
    /// Multipliers of `b >= 0` and `xi >= 0`.
    pub y_b: f64,
    pub y_xi: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub status: IpmStatus,
}

/// Cone layout and operators for one problem instance.
struct Layout<'a> {
    data: &'a SocpData,
    radius: f64,
    c: f64,
    n: usize,
    l: usize,
    /// Offset of each second-order cone in the stacked cone vector.
    soc_off: Vec<usize>,
    cone_len: usize,
}

impl<'a> Layout<'a> {
    fn new(data: &'a SocpData, radius: f64, c: f64) -> Self {
        let n = data.dim();
        let l = data.num_constraints();
        let mut soc_off = Vec::with_capacity(l);
        let mut off = 1 + l;
        for r in &data.block_rows {
            soc_off.push(off);
            off += 1 + r.len();
        }
        Self {
            data,
            radius,
            c,
            n,
            l,
            soc_off,
            cone_len: off,
        }
    }

    fn nvar(&self) -> usize {
        self.n + 1 + self.l
    }

    fn degree(&self) -> f64 {
        (1 + 2 * self.l) as f64
    }

    fn soc(&self, i: usize) -> Range<usize> {
        self.soc_off[i]..self.soc_off[i] + 1 + self.data.block_rows[i].len()
    }

    fn q(&self) -> DVector<f64> {
        let mut q = DVector::zeros(self.nvar());
        q[self.n] = -1.0;
        for i in 0..self.l {
            q[self.n + 1 + i] = self.c;
        }
        q
    }

    /// `G x`.
    fn g_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let (n, l) = (self.n, self.l);
        let z = x.rows(0, n);
        let b = x[n];
        let mut out = DVector::zeros(self.cone_len);
        out[0] = -b;
        for i in 0..l {
            out[1 + i] = -x[n + 1 + i];
        }
        let dz = self.data.d.tr_mul(&z);
        let bz = &self.data.blocks * z;
        for i in 0..l {
            let off = self.soc_off[i];
            out[off] = -(dz[i] - b + x[n + 1 + i]);
            for (t, row) in self.data.block_rows[i].clone().enumerate() {
                out[off + 1 + t] = -self.radius * bz[row];
            }
        }
        out
    }

    /// `G^T y`.
    fn gt_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let (n, l) = (self.n, self.l);
        let mut y0 = DVector::zeros(l);
        let mut y1 = DVector::zeros(self.data.blocks.nrows());
        for i in 0..l {
            let off = self.soc_off[i];
            y0[i] = y[off];
            for (t, row) in self.data.block_rows[i].clone().enumerate() {
                y1[row] = y[off + 1 + t];
            }
        }
        let mut out = DVector::zeros(self.nvar());
        let zpart = -(&self.data.d * &y0) - self.data.blocks.tr_mul(&y1) * self.radius;
        out.rows_mut(0, n).copy_from(&zpart);
        out[n] = -y[0] + y0.sum();
        for i in 0..l {
            out[n + 1 + i] = -y[1 + i] - y0[i];
        }
        out
    }

    fn p_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nvar());
        out.rows_mut(0, self.n).copy_from(&x.rows(0, self.n));
        out
    }
}

/// Nesterov-Todd scaling of one second-order cone: `W = beta * H(w)` with
/// `w^T J w = 1`.
#[derive(Debug, Clone)]
struct SocScale {
    beta: f64,
    w: DVector<f64>,
}

impl SocScale {
    fn identity(dim: usize) -> Self {
        let mut w = DVector::zeros(dim);
        w[0] = 1.0;
        Self { beta: 1.0, w }
    }

    fn new(s: &[f64], y: &[f64]) -> Option<Self> {
        let sn = jnorm(s)?;
        let yn = jnorm(y)?;
        let k = s.len();
        let mut sbar = DVector::from_column_slice(s);
        sbar /= sn;
        let mut ybar = DVector::from_column_slice(y);
        ybar /= yn;
        let dot = sbar.dot(&ybar);
        let gamma = libm::sqrt((1.0 + dot) / 2.0);
        let mut w = DVector::zeros(k);
        w[0] = (sbar[0] + ybar[0]) / (2.0 * gamma);
        for t in 1..k {
            w[t] = (sbar[t] - ybar[t]) / (2.0 * gamma);
        }
        // renormalize against rounding so that w0^2 - |w1|^2 = 1
        let w1sq: f64 = w.rows(1, k - 1).norm_squared();
        w[0] = libm::sqrt(1.0 + w1sq);
        Some(Self {
            beta: libm::sqrt(sn / yn),
            w,
        })
    }

    /// `W v` (or `W^-1 v`).
    fn apply(&self, v: &[f64], out: &mut [f64], inverse: bool) {
        let k = v.len();
        let w0 = self.w[0];
        let w1v: f64 = (1..k).map(|t| self.w[t] * v[t]).sum();
        let (sign, scale) = if inverse {
            (-1.0, 1.0 / self.beta)
        } else {
            (1.0, self.beta)
        };
        out[0] = scale * (w0 * v[0] + sign * w1v);
        let coef = sign * v[0] + w1v / (1.0 + w0);
        for t in 1..k {
            out[t] = scale * (v[t] + coef * self.w[t]);
        }
    }
}

/// `sqrt(u0^2 - |u1|^2)` when `u` is strictly inside the cone.
fn jnorm(u: &[f64]) -> Option<f64> {
    let n1 = libm::sqrt(u[1..].iter().map(|v| v * v).sum::<f64>());
    let det = (u[0] - n1) * (u[0] + n1);
    if u[0] > 0.0 && det > 0.0 {
        Some(libm::sqrt(det))
    } else {
        None
    }
}

struct Scaling {
    nn: Vec<f64>,
    soc: Vec<SocScale>,
}

impl Scaling {
    fn identity(lay: &Layout) -> Self {
        Self {
            nn: alloc::vec![1.0; 1 + lay.l],
            soc: (0..lay.l)
                .map(|i| SocScale::identity(lay.soc(i).len()))
                .collect(),
        }
    }

    fn new(lay: &Layout, s: &DVector<f64>, y: &DVector<f64>) -> Option<Self> {
        let mut nn = Vec::with_capacity(1 + lay.l);
        for j in 0..=lay.l {
            if !(s[j] > 0.0 && y[j] > 0.0) {
                return None;
            }
            nn.push(libm::sqrt(s[j] / y[j]));
        }
        let mut soc = Vec::with_capacity(lay.l);
        for i in 0..lay.l {
            let r = lay.soc(i);
            soc.push(SocScale::new(&s.as_slice()[r.clone()], &y.as_slice()[r])?);
        }
        Some(Self { nn, soc })
    }

    fn apply(&self, lay: &Layout, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for j in 0..self.nn.len() {
            out[j] = if inverse {
                v[j] / self.nn[j]
            } else {
                v[j] * self.nn[j]
            };
        }
        for (i, sc) in self.soc.iter().enumerate() {
            let r = lay.soc(i);
            sc.apply(
                &v.as_slice()[r.clone()],
                &mut out.as_mut_slice()[r],
                inverse,
            );
        }
        out
    }
}

/// Jordan product `u o v`.
fn jordan(lay: &Layout, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(u.len());
    for j in 0..=lay.l {
        out[j] = u[j] * v[j];
    }
    for i in 0..lay.l {
        let r = lay.soc(i);
        let o = r.start;
        out[o] = (o..r.end).map(|t| u[t] * v[t]).sum();
        for t in o + 1..r.end {
            out[t] = u[o] * v[t] + v[o] * u[t];
        }
    }
    out
}

/// Solve `lambda o x = r` for `x`.
fn jordan_div(lay: &Layout, lambda: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(r.len());
    for j in 0..=lay.l {
        out[j] = r[j] / lambda[j];
    }
    for i in 0..lay.l {
        let rg = lay.soc(i);
        let o = rg.start;
        let l0 = lambda[o];
        let n1sq: f64 = (o + 1..rg.end).map(|t| lambda[t] * lambda[t]).sum();
        let det = l0 * l0 - n1sq;
        let l1r1: f64 = (o + 1..rg.end).map(|t| lambda[t] * r[t]).sum();
        let x0 = (l0 * r[o] - l1r1) / det;
        out[o] = x0;
        for t in o + 1..rg.end {
            out[t] = (r[t] - x0 * lambda[t]) / l0;
        }
    }
    out
}

/// Largest `a` with `u + a e` on the boundary, i.e. how far `u` is outside
/// the cone (negative when strictly inside).
fn max_violation(lay: &Layout, u: &DVector<f64>) -> f64 {
    let mut t = f64::NEG_INFINITY;
    for j in 0..=lay.l {
        t = t.max(-u[j]);
    }
    for i in 0..lay.l {
        let r = lay.soc(i);
        let n1 = libm::sqrt(
            u.as_slice()[r.start + 1..r.end]
                .iter()
                .map(|v| v * v)
                .sum::<f64>(),
        );
        t = t.max(n1 - u[r.start]);
    }
    t
}

fn add_identity(lay: &Layout, u: &mut DVector<f64>, a: f64) {
    for j in 0..=lay.l {
        u[j] += a;
    }
    for i in 0..lay.l {
        u[lay.soc_off[i]] += a;
    }
}

/// Largest step `a` (possibly infinite) keeping `lambda + a d` in the cone,
/// for `lambda` strictly inside.
fn max_step(lay: &Layout, lambda: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for j in 0..=lay.l {
        if d[j] < 0.0 {
            best = best.min(-lambda[j] / d[j]);
        }
    }
    for i in 0..lay.l {
        let r = lay.soc(i);
        let o = r.start;
        let n1 = libm::sqrt((o + 1..r.end).map(|t| lambda[t] * lambda[t]).sum::<f64>());
        let c = (lambda[o] - n1) * (lambda[o] + n1);
        let a = d[o] * d[o] - (o + 1..r.end).map(|t| d[t] * d[t]).sum::<f64>();
        let b = lambda[o] * d[o] - (o + 1..r.end).map(|t| lambda[t] * d[t]).sum::<f64>();
        // a s^2 + 2 b s + c = 0, smallest positive root
        let root = if a.abs() <= 1e-300 {
            if b < 0.0 {
                -c / (2.0 * b)
            } else {
                f64::INFINITY
            }
        } else {
            let disc = b * b - a * c;
            if disc < 0.0 {
                f64::INFINITY
            } else {
                let sq = libm::sqrt(disc);
                let qq = -(b + if b >= 0.0 { sq } else { -sq });
                let mut rt = f64::INFINITY;
                for cand in [qq / a, if qq != 0.0 { c / qq } else { f64::INFINITY }] {
                    if cand > 0.0 {
                        rt = rt.min(cand);
                    }
                }
                rt
            }
        };
        // the first component must not go negative either
        let lin = if d[o] < 0.0 {
            -lambda[o] / d[o]
        } else {
            f64::INFINITY
        };
        best = best.min(root).min(lin);
    }
    best
}

/// Factorization of `H = P + G^T W^-2 G`.
struct Kkt {
    chol: Cholesky<f64, Dyn>,
    /// Columns `h_i`, the coupling of `xi_i` with `(z, b)`.
    hh: DMatrix<f64>,
    delta: Vec<f64>,
    n1: usize,
}

impl Kkt {
    fn new(lay: &Layout, w: &Scaling) -> Option<Self> {
        let (n, l) = (lay.n, lay.l);
        let n1 = n + 1;
        let rows = lay.cone_len - (1 + l);
        let data = lay.data;
        let mut cmat = DMatrix::zeros(rows, n1);
        let mut hh = DMatrix::zeros(n1, l);
        let mut delta = Vec::with_capacity(l);
        let mut v = Vec::new();
        let mut out = Vec::new();
        for i in 0..l {
            let br = data.block_rows[i].clone();
            let k = 1 + br.len();
            let r0 = lay.soc_off[i] - (1 + l);
            let sc = &w.soc[i];
            v.resize(k, 0.0);
            out.resize(k, 0.0);
            for j in 0..n1 {
                if j < n {
                    v[0] = data.d[(j, i)];
                    for (t, row) in br.clone().enumerate() {
                        v[1 + t] = lay.radius * data.blocks[(row, j)];
                    }
                } else {
                    v[0] = -1.0;
                    for t in 1..k {
                        v[t] = 0.0;
                    }
                }
                sc.apply(&v, &mut out, true);
                for t in 0..k {
                    cmat[(r0 + t, j)] = out[t];
                }
            }
            // a_i = W_i^-1 e_1
            v.iter_mut().for_each(|x| *x = 0.0);
            v[0] = 1.0;
            sc.apply(&v, &mut out, true);
            let a_norm2: f64 = out.iter().map(|x| x * x).sum();
            for j in 0..n1 {
                hh[(j, i)] = (0..k).map(|t| cmat[(r0 + t, j)] * out[t]).sum();
            }
            let wx = w.nn[1 + i];
            delta.push(a_norm2 + 1.0 / (wx * wx));
        }
        let mut s = cmat.transpose() * &cmat;
        for j in 0..n {
            s[(j, j)] += 1.0;
        }
        s[(n, n)] += 1.0 / (w.nn[0] * w.nn[0]);
        let mut scaled = hh.clone();
        for i in 0..l {
            let f = 1.0 / libm::sqrt(delta[i]);
            scaled.column_mut(i).scale_mut(f);
        }
        s.gemm(-1.0, &scaled, &scaled.transpose(), 1.0);
        s = (&s + s.transpose()) * 0.5;

        let diag_max = s
            .diagonal()
            .iter()
            .fold(0.0f64, |a, &v| a.max(v.abs()))
            .max(1.0);
        let mut reg = 0.0;
        for _ in 0..6 {
            let mut t = s.clone();
            if reg > 0.0 {
                for j in 0..n1 {
                    t[(j, j)] += reg;
                }
            }
            if let Some(chol) = Cholesky::new(t) {
                return Some(Self {
                    chol,
                    hh,
                    delta,
                    n1,
                });
            }
            reg = if reg == 0.0 {
                1e-14 * diag_max
            } else {
                reg * 100.0
            };
        }
        None
    }

    fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let n1 = self.n1;
        let l = self.delta.len();
        let mut t = DVector::from_iterator(n1, r.iter().take(n1).copied());
        let mut rx = DVector::zeros(l);
        for i in 0..l {
            rx[i] = r[n1 + i] / self.delta[i];
        }
        t.gemv(-1.0, &self.hh, &rx, 1.0);
        let zb = self.chol.solve(&t);
        let hz = self.hh.tr_mul(&zb);
        let mut out = DVector::zeros(n1 + l);
        out.rows_mut(0, n1).copy_from(&zb);
        for i in 0..l {
            out[n1 + i] = (r[n1 + i] - hz[i]) / self.delta[i];
        }
        out
    }
}

struct Newton<'a> {
    lay: &'a Layout<'a>,
    w: &'a Scaling,
    kkt: Kkt,
}

impl Newton<'_> {
    fn h_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let gv = self.lay.g_mul(v);
        let t = self
            .w
            .apply(self.lay, &self.w.apply(self.lay, &gv, true), true);
        self.lay.p_mul(v) + self.lay.gt_mul(&t)
    }

    /// Solve `H dx = rhs` with one step of iterative refinement.
    fn solve_h(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.kkt.solve(rhs);
        let res = rhs - self.h_mul(&x);
        x += self.kkt.solve(&res);
        x
    }

    fn w2(&self, v: &DVector<f64>) -> DVector<f64> {
        self.w
            .apply(self.lay, &self.w.apply(self.lay, v, true), true)
    }

    /// Returns `(dx, dy, ds)` for right-hand sides `bx`, `by` and the scaled
    /// complementarity term `ds_tilde`.
    ///
    /// The reduced solve loses accuracy near the boundary, so the first
    /// block row `P dx + G' dy = bx` is refined directly.
    fn direction(
        &self,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        ds_tilde: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let lay = self.lay;
        let bz = by - self.w.apply(lay, ds_tilde, false);
        let rhs = bx + lay.gt_mul(&self.w2(&bz));
        let mut dx = self.kkt.solve(&rhs);
        let mut dy = self.w2(&(lay.g_mul(&dx) - &bz));
        let scale = bx.norm().max(1.0);
        for _ in 0..3 {
            let e = bx - lay.p_mul(&dx) - lay.gt_mul(&dy);
            if e.norm() <= 1e-14 * scale {
                break;
            }
            let ddx = self.kkt.solve(&e);
            dy += self.w2(&lay.g_mul(&ddx));
            dx += ddx;
        }
        let ds = by - lay.g_mul(&dx);
        (dx, dy, ds)
    }
}

/// Solve the robust margin SOCP with ellipsoid radius `radius` and slack
/// weight `c`.
pub fn solve_socp(
    data: &SocpData,
    radius: f64,
    c: f64,
    settings: &IpmSettings,
) -> Result<IpmResult> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::input("radius must be finite and non-negative"));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::input("slack weight must be positive"));
    }
    let lay = Layout::new(data, radius, c);
    let q = lay.q();
    let resx0 = q.norm().max(1.0);

    // starting point from the identity-scaled system
    let ident = Scaling::identity(&lay);
    let kkt =
        Kkt::new(&lay, &ident).ok_or_else(|| Error::numerical("initial KKT system is singular"))?;
    let newton = Newton {
        lay: &lay,
        w: &ident,
        kkt,
    };
    let mut x = newton.solve_h(&(-&q));
    let gx = lay.g_mul(&x);
    let mut s = -&gx;
    let mut y = gx;
    for u in [&mut s, &mut y] {
        let t = max_violation(&lay, u);
        if t >= -1e-8 * u.norm().max(1.0) {
            add_identity(&lay, u, 1.0 + t);
        }
    }

    let mut iterations = 0;
    // best iterate within the contract tolerances, by worst residual
    let mut best: Option<(f64, DVector<f64>, DVector<f64>, [f64; 4])> = None;
    let (status, pres, dres, gap, relgap) = loop {
        let gx = lay.g_mul(&x);
        let rx = lay.p_mul(&x) + &q + lay.gt_mul(&y);
        let ry = &gx + &s;
        let gap = s.dot(&y);
        let zn = x.rows(0, lay.n).norm_squared();
        let pcost = 0.5 * zn + q.dot(&x);
        let dcost = pcost + y.dot(&gx);
        let pres = ry.norm();
        let dres = rx.norm() / resx0;
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let done = |st| (st, pres, dres, gap, relgap);

        if !(pres.is_finite() && dres.is_finite() && gap.is_finite()) {
            return Err(Error::Solver {
                iterations,
                residual: f64::NAN,
                reason: "iterates became non-finite".into(),
            });
        }
        if pres <= settings.feastol
            && dres <= settings.feastol
            && (gap <= settings.abstol || relgap <= settings.reltol)
        {
            break done(IpmStatus::Optimal);
        }
        if x.norm() > 1e13 || y.norm() > 1e13 {
            break done(IpmStatus::Infeasible);
        }
        let within_contract = pres <= settings.contract_tol
            && dres <= settings.contract_tol
            && (gap <= settings.contract_tol || relgap <= settings.contract_tol);
        if within_contract {
            let merit = pres.max(dres).max(gap.min(relgap));
            if best.as_ref().map_or(true, |b| merit < b.0) {
                best = Some((merit, x.clone(), y.clone(), [pres, dres, gap, relgap]));
            }
        }
        if iterations >= settings.max_iter {
            break done(IpmStatus::MaxIter);
        }

        let Some(w) = Scaling::new(&lay, &s, &y) else {
            break done(IpmStatus::MaxIter);
        };
        let Some(kkt) = Kkt::new(&lay, &w) else {
            break done(IpmStatus::MaxIter);
        };
        let newton = Newton {
            lay: &lay,
            w: &w,
            kkt,
        };
        let lambda = w.apply(&lay, &y, false);
        let mu = gap / lay.degree();
        let bx = -&rx;
        let by = -&ry;

        // predictor
        let ds_aff = -&lambda;
        let (_, dy_a, ds_a) = newton.direction(&bx, &by, &ds_aff);
        let sds_a = w.apply(&lay, &ds_a, true);
        let wdy_a = w.apply(&lay, &dy_a, false);
        let alpha_a = max_step(&lay, &lambda, &sds_a)
            .min(max_step(&lay, &lambda, &wdy_a))
            .min(1.0);
        let sigma = {
            let t = 1.0 - alpha_a;
            t * t * t
        };

        // corrector
        let mut d_s = -jordan(&lay, &lambda, &lambda) - jordan(&lay, &sds_a, &wdy_a);
        add_identity(&lay, &mut d_s, sigma * mu);
        let ds_tilde = jordan_div(&lay, &lambda, &d_s);
        let (dx, dy, ds) = newton.direction(&bx, &by, &ds_tilde);
        let sds = w.apply(&lay, &ds, true);
        let wdy = w.apply(&lay, &dy, false);
        let amax = max_step(&lay, &lambda, &sds).min(max_step(&lay, &lambda, &wdy));
        let alpha = (settings.step * amax).min(1.0);
        if !(alpha > 1e-12) {
            break done(IpmStatus::MaxIter);
        }

        let xn = &x + &dx * alpha;
        let sn = &s + &ds * alpha;
        let yn = &y + &dy * alpha;
        if max_violation(&lay, &sn) >= 0.0 || max_violation(&lay, &yn) >= 0.0 {
            break done(IpmStatus::MaxIter);
        }
        x = xn;
        s = sn;
        y = yn;
        iterations += 1;
    };

    // fall back to the best accepted iterate when the run did not finish
    let (status, pres, dres, gap, relgap) = match best {
        Some((_, bx, by, r)) if status == IpmStatus::MaxIter => {
            x = bx;
            y = by;
            (IpmStatus::Optimal, r[0], r[1], r[2], r[3])
        }
        _ => (status, pres, dres, gap, relgap),
    };
    let n = lay.n;
    let l = lay.l;
    let mut b = x[n].max(0.0);
    let mut xi: Vec<f64> = (0..l).map(|i| x[n + 1 + i].max(0.0)).collect();
    // Moving b and every xi down by the same amount keeps all cone
    // constraints and changes the objective by t (1 - c l) <= 0 when c l >= 1.
    // When c l = 1 the optimum is flat along that ray; pick the end of it.
    if c * l as f64 >= 1.0 {
        let t = xi.iter().copied().fold(b, f64::min);
        b -= t;
        xi.iter_mut().for_each(|v| *v -= t);
    }
    let objective = 0.5 * x.rows(0, n).norm_squared() - b + c * xi.iter().sum::<f64>();
    Ok(IpmResult {
        z: DVector::from_iterator(n, x.iter().take(n).copied()),
        b,
        xi,
        gamma: (0..l).map(|i| y[lay.soc_off[i]]).collect(),
        y_b: y[0],
        y_xi: (0..l).map(|i| y[1 + i]).collect(),
        objective,
        primal_residual: pres,
        dual_residual: dres,
        gap,
        relative_gap: relgap,
        iterations,
        status,
    })
}
