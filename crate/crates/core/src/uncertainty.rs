//! Ambiguity-set specifications and the sample sets that stand in for them.
//!
//! A [`MomentSpec`] pins the mean and covariance of one uncertain training
//! point; any distribution with those two moments is admissible. The builders
//! here turn specs (or raw training points) into a [`SampleSet`], the input of
//! the kernel moment estimates.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::kernel::{psd_sqrt, DEFAULT_EPS_PSD};
use crate::rng;
use crate::{Error, Point, Result};

/// Default covariance floor for degenerate clusters in Clustering II.
pub const DEFAULT_COV_FLOOR: f64 = 1e-4;

/// First two moments of one uncertain point.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSpec {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl MomentSpec {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::input("moment spec needs a non-empty mean"));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::input(alloc::format!(
                "covariance is {}x{}, mean has length {n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("moment spec has non-finite entries"));
        }
        for j in 0..n {
            for i in (j + 1)..n {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-10 {
                    return Err(Error::input("covariance is not symmetric"));
                }
            }
        }
        let min = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if min < -1e-10 {
            return Err(Error::input(alloc::format!(
                "covariance is not PSD (smallest eigenvalue {min:e})"
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Mean `point` with covariance `variance * I`.
    pub fn isotropic(point: &[f64], variance: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::input("variance must be non-negative"));
        }
        let n = point.len();
        Self::new(
            DVector::from_column_slice(point),
            DMatrix::identity(n, n) * variance,
        )
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Family used to realize a moment specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistributionKind {
    Normal,
    Uniform,
    StudentT { dof: u32 },
}

impl DistributionKind {
    /// The three kinds used for robustness evaluation.
    pub const EVALUATION: [DistributionKind; 3] = [
        DistributionKind::Normal,
        DistributionKind::Uniform,
        DistributionKind::StudentT { dof: 7 },
    ];

    pub fn validate(self) -> Result<()> {
        match self {
            DistributionKind::StudentT { dof } if dof <= 2 => Err(Error::input(alloc::format!(
                "student-t needs dof > 2 for a finite covariance, got {dof}"
            ))),
            _ => Ok(()),
        }
    }

    /// Scale applied to raw Student-t draws so they have unit variance.
    pub fn student_t_scale(dof: u32) -> f64 {
        libm::sqrt((dof as f64 - 2.0) / dof as f64)
    }

    /// Half-width of the zero-mean unit-variance uniform.
    pub const UNIFORM_HALF_WIDTH: f64 = 1.732_050_807_568_877_2;
}

/// Per-point sample lists, pooled point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    per_point: Vec<Vec<Point>>,
}

impl SampleSet {
    pub fn new(per_point: Vec<Vec<Point>>) -> Result<Self> {
        if per_point.is_empty() {
            return Err(Error::input("sample set has no points"));
        }
        if per_point.iter().any(|s| s.is_empty()) {
            return Err(Error::input("every point needs at least one sample"));
        }
        let dim = per_point[0][0].len();
        if dim == 0 || per_point.iter().flatten().any(|x| x.len() != dim) {
            return Err(Error::input("samples have inconsistent dimensions"));
        }
        Ok(Self { per_point })
    }

    pub fn per_point(&self) -> &[Vec<Point>] {
        &self.per_point
    }

    /// Number of points `l`.
    pub fn len(&self) -> usize {
        self.per_point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_point.is_empty()
    }

    /// Total number of samples `m`.
    pub fn total(&self) -> usize {
        self.per_point.iter().map(Vec::len).sum()
    }

    pub fn dim(&self) -> usize {
        self.per_point[0][0].len()
    }

    /// Samples in canonical pooled order.
    pub fn pooled(&self) -> impl Iterator<Item = &Point> + '_ {
        self.per_point.iter().flatten()
    }

    /// Range of each point's samples in the pooled order.
    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.per_point
            .iter()
            .map(|s| {
                let r = start..start + s.len();
                start += s.len();
                r
            })
            .collect()
    }
}

/// Draw `count` i.i.d. samples with exactly the mean and covariance of `spec`.
///
/// Standardized coordinates (zero mean, unit variance) are drawn
/// independently and correlated through the PSD square root of the
/// covariance.
pub fn sample_with_moments(
    spec: &MomentSpec,
    kind: DistributionKind,
    count: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    let root = psd_sqrt(spec.cov(), DEFAULT_EPS_PSD)?;
    sample_with_root(spec.mean(), &root, kind, count, &mut rng::stream(seed, 0))
}

fn sample_with_root(
    mean: &DVector<f64>,
    root: &DMatrix<f64>,
    kind: DistributionKind,
    count: usize,
    rng: &mut rng::Rng,
) -> Result<Vec<Point>> {
    kind.validate()?;
    if count == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    let n = mean.len();
    let student = match kind {
        DistributionKind::StudentT { dof } => Some((
            StudentT::new(dof as f64).map_err(|e| Error::input(alloc::format!("{e}")))?,
            DistributionKind::student_t_scale(dof),
        )),
        _ => None,
    };
    let a = DistributionKind::UNIFORM_HALF_WIDTH;
    let mut z = DVector::zeros(n);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        for v in z.iter_mut() {
            *v = match kind {
                DistributionKind::Normal => StandardNormal.sample(rng),
                DistributionKind::Uniform => rng.random_range(-a..a),
                DistributionKind::StudentT { .. } => {
                    let (t, s) = student.as_ref().unwrap();
                    t.sample(rng) * s
                }
            };
        }
        let x = mean + root * &z;
        out.push(x.as_slice().to_vec());
    }
    Ok(out)
}

/// KDRCC-Sampling: `n_batch` draws around every training point.
///
/// `train_points` are the nominal points the specs were built from; they are
/// checked for count and dimension only.
pub fn build_kdrcc_sampling(
    train_points: &[Point],
    specs: &[MomentSpec],
    kind: DistributionKind,
    n_batch: usize,
    seed: u64,
) -> Result<SampleSet> {
    if train_points.len() != specs.len() {
        return Err(Error::input(alloc::format!(
            "{} training points but {} moment specs",
            train_points.len(),
            specs.len()
        )));
    }
    if specs.is_empty() {
        return Err(Error::input("no training points"));
    }
    if n_batch == 0 {
        return Err(Error::input("n_batch must be at least 1"));
    }
    let mut per_point = Vec::with_capacity(specs.len());
    for (i, (x, spec)) in train_points.iter().zip(specs).enumerate() {
        if x.len() != spec.dim() {
            return Err(Error::input("training point and spec dimensions differ"));
        }
        let root = psd_sqrt(spec.cov(), DEFAULT_EPS_PSD)?;
        let mut rng = rng::stream(seed, i as u64);
        per_point.push(sample_with_root(
            spec.mean(),
            &root,
            kind,
            n_batch,
            &mut rng,
        )?);
    }
    SampleSet::new(per_point)
}

/// Result of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Point>,
    pub iterations: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's k-means from a seeded k-means++ start.
///
/// Stops when no centroid moves more than `tol` (max-abs) or after
/// `max_iter` rounds. An emptied cluster is reseeded at the point farthest
/// from its current centroid.
pub fn kmeans(points: &[Point], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeans> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::input(alloc::format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::input("points have inconsistent dimensions"));
    }
    let mut rng = rng::stream(seed, 0);

    // k-means++ seeding
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
            pick.unwrap()
        } else {
            // all remaining points coincide with a centroid
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &points[next]));
        }
    }

    let mut assignments = vec![0usize; n];
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            assignments[i] = nearest(p, &centroids).0;
        }
        repair_empty(points, &mut assignments, &mut centroids);
        let updated = cluster_means(points, &assignments, k);
        let moved = updated
            .iter()
            .flatten()
            .zip(centroids.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        centroids = updated;
        if moved <= tol {
            break;
        }
    }
    Ok(KMeans {
        assignments,
        centroids,
        iterations,
    })
}

/// Move the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &[Point], assignments: &mut [usize], centroids: &mut [Point]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &c in assignments.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let far = (0..points.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&a, &b| {
                let da = dist2(&points[a], &centroids[assignments[a]]);
                let db = dist2(&points[b], &centroids[assignments[b]]);
                da.partial_cmp(&db).unwrap().then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two members");
        assignments[far] = empty;
        centroids[empty] = points[far].clone();
    }
}

fn cluster_means(points: &[Point], assignments: &[usize], k: usize) -> Vec<Point> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignments) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect()
}

const KMEANS_MAX_ITER: usize = 300;
const KMEANS_TOL: f64 = 1e-10;

/// Clusters with their representative members (closest to the centroid).
struct Clusters {
    representatives: Vec<Point>,
    members: Vec<Vec<Point>>,
}

fn cluster_training_set(train_points: &[Point], k: usize, seed: u64) -> Result<Clusters> {
    if train_points.is_empty() {
        return Err(Error::input("empty training set"));
    }
    let km = kmeans(train_points, k, seed, KMEANS_MAX_ITER, KMEANS_TOL)?;
    let mut members: Vec<Vec<Point>> = vec![Vec::new(); k];
    for (p, &c) in train_points.iter().zip(&km.assignments) {
        members[c].push(p.clone());
    }
    let representatives = members
        .iter()
        .zip(&km.centroids)
        .map(|(group, centroid)| {
            group
                .iter()
                .min_by(|a, b| dist2(a, centroid).partial_cmp(&dist2(b, centroid)).unwrap())
                .unwrap()
                .clone()
        })
        .collect();
    Ok(Clusters {
        representatives,
        members,
    })
}

/// KDRCC-Clustering I: every cluster is one constraint whose samples are its
/// members. Returns the representative means and the sample set.
pub fn build_kdrcc_clustering_i(
    train_points: &[Point],
    k: usize,
    seed: u64,
) -> Result<(Vec<Point>, SampleSet)> {
    let clusters = cluster_training_set(train_points, k, seed)?;
    Ok((clusters.representatives, SampleSet::new(clusters.members)?))
}

/// KDRCC-Clustering II: cluster means as for Clustering I, then `n_batch`
/// fresh samples per cluster drawn with the members' empirical covariance
/// around the representative.
pub fn build_kdrcc_clustering_ii(
    train_points: &[Point],
    k: usize,
    kind: DistributionKind,
    n_batch: usize,
    seed: u64,
    cov_floor: f64,
) -> Result<(Vec<Point>, SampleSet)> {
    if n_batch == 0 {
        return Err(Error::input("n_batch must be at least 1"));
    }
    if !(cov_floor > 0.0) {
        return Err(Error::input("cov_floor must be positive"));
    }
    kind.validate()?;
    let clusters = cluster_training_set(train_points, k, seed)?;
    let sample_seed = rng::derive_seed(seed, 0xC2);
    let mut per_point = Vec::with_capacity(clusters.members.len());
    for (c, (rep, group)) in clusters
        .representatives
        .iter()
        .zip(&clusters.members)
        .enumerate()
    {
        let cov = member_covariance(group, cov_floor);
        let spec = MomentSpec::new(DVector::from_column_slice(rep), cov)?;
        let root = psd_sqrt(spec.cov(), DEFAULT_EPS_PSD)?;
        let mut rng = rng::stream(sample_seed, c as u64);
        per_point.push(sample_with_root(
            spec.mean(),
            &root,
            kind,
            n_batch,
            &mut rng,
        )?);
    }
    Ok((clusters.representatives, SampleSet::new(per_point)?))
}

/// Maximum-likelihood covariance of the members; `floor * I` is added when
/// the estimate is degenerate (smallest eigenvalue below the floor).
fn member_covariance(group: &[Point], floor: f64) -> DMatrix<f64> {
    let n = group[0].len();
    let count = group.len() as f64;
    let mut mean = DVector::zeros(n);
    for p in group {
        mean += DVector::from_column_slice(p);
    }
    mean /= count;
    let mut cov = DMatrix::zeros(n, n);
    for p in group {
        let d = DVector::from_column_slice(p) - &mean;
        cov.ger(1.0 / count, &d, &d, 1.0);
    }
    cov = (&cov + cov.transpose()) * 0.5;
    let min = SymmetricEigen::new(cov.clone()).eigenvalues.min();
    if group.len() < 2 || min < floor {
        cov += DMatrix::identity(n, n) * floor;
    }
    cov
}
