//! Simulated datasets D1, D2, D3.
//!
//! Every split is a fresh draw from the class distributions with exact class
//! counts: training has 100 normal points and 2 anomalies, validation and
//! test have 35 normal points and 5 anomalies each. Rows are ordered normal
//! first, then anomalies.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};

use crate::rng::{self, Rng};
use crate::uncertainty::MomentSpec;
use crate::{Error, Label, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    /// `(normal, anomaly)` counts for this split.
    pub fn counts(self) -> (usize, usize) {
        match self {
            Split::Train => (100, 2),
            Split::Validation | Split::Test => (35, 5),
        }
    }

    fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Validation => 1,
            Split::Test => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetId {
    D1,
    D2,
    D3,
}

impl DatasetId {
    pub const ALL: [DatasetId; 3] = [DatasetId::D1, DatasetId::D2, DatasetId::D3];

    pub fn generate(self, seed: u64) -> (LabeledDataset, LabeledDataset, LabeledDataset) {
        match self {
            DatasetId::D1 => gen_d1(seed),
            DatasetId::D2 => gen_d2(seed),
            DatasetId::D3 => gen_d3(seed),
        }
    }

    /// Isotropic variance used for the moment specs and for NUT evaluation.
    pub fn default_variance(self) -> f64 {
        match self {
            DatasetId::D1 => 0.1,
            DatasetId::D2 | DatasetId::D3 => 1.0,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            DatasetId::D1 | DatasetId::D3 => 2,
            DatasetId::D2 => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetId::D1 => "d1",
            DatasetId::D2 => "d2",
            DatasetId::D3 => "d3",
        }
    }

    fn tag(self) -> u64 {
        match self {
            DatasetId::D1 => 1,
            DatasetId::D2 => 2,
            DatasetId::D3 => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub points: Vec<Point>,
    pub labels: Vec<Label>,
    pub split: Split,
    pub seed: u64,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

fn build(
    id: DatasetId,
    seed: u64,
    mut draw: impl FnMut(Label, &mut Rng) -> Point,
) -> (LabeledDataset, LabeledDataset, LabeledDataset) {
    let base = rng::derive_seed(seed, id.tag());
    let mut make = |split: Split| {
        let (n_norm, n_anom) = split.counts();
        let mut points = Vec::with_capacity(n_norm + n_anom);
        let mut labels = Vec::with_capacity(n_norm + n_anom);
        for (class, count, label) in [(0, n_norm, Label::Normal), (1, n_anom, Label::Anomaly)] {
            let mut r = rng::stream(base, split.index() * 2 + class);
            for _ in 0..count {
                points.push(draw(label, &mut r));
                labels.push(label);
            }
        }
        LabeledDataset {
            points,
            labels,
            split,
            seed,
        }
    };
    let train = make(Split::Train);
    let val = make(Split::Validation);
    let test = make(Split::Test);
    (train, val, test)
}

fn normal(mean: f64, variance: f64) -> Normal<f64> {
    Normal::new(mean, libm::sqrt(variance)).expect("finite parameters")
}

fn uniform(lo: f64, hi: f64) -> Uniform<f64> {
    Uniform::new_inclusive(lo, hi).expect("finite bounds")
}

/// D1: normal `N([2,2], 0.3 I)`, anomalies `N([0.2,0.2], 0.1 I)`.
pub fn gen_d1(seed: u64) -> (LabeledDataset, LabeledDataset, LabeledDataset) {
    let norm = normal(2.0, 0.3);
    let anom = normal(0.2, 0.1);
    build(DatasetId::D1, seed, |label, r| {
        let d = if label.is_anomaly() { &anom } else { &norm };
        alloc::vec![d.sample(r), d.sample(r)]
    })
}

/// D2: seven features, two of which separate the classes (f1 and its
/// double f5, and f6), the rest noise or near-constant.
pub fn gen_d2(seed: u64) -> (LabeledDataset, LabeledDataset, LabeledDataset) {
    let f1n = normal(-6.0, 1.0);
    let f1a = normal(6.0, 1.0);
    let f2 = normal(-3.0, 5.0);
    let f3 = normal(10.0, 0.001);
    let f4n = normal(1.0, 0.008);
    let f4a = normal(1.02, 0.008);
    let f6n = uniform(-5.0, 5.0);
    let f6a = uniform(30.0, 50.0);
    let f7 = uniform(-50.0, 50.0);
    build(DatasetId::D2, seed, |label, r| {
        let a = label.is_anomaly();
        let x1 = if a { f1a.sample(r) } else { f1n.sample(r) };
        let x2 = f2.sample(r);
        let x3 = f3.sample(r);
        let x4 = if a { f4a.sample(r) } else { f4n.sample(r) };
        let x6 = if a { f6a.sample(r) } else { f6n.sample(r) };
        let x7 = f7.sample(r);
        alloc::vec![x1, x2, x3, x4, 2.0 * x1, x6, x7]
    })
}

/// D3: two rings, `(r sin t, r cos t)` with `r in [3,5]` for normal points
/// and `r in [10,12]` for anomalies.
pub fn gen_d3(seed: u64) -> (LabeledDataset, LabeledDataset, LabeledDataset) {
    build(DatasetId::D3, seed, |label, r| {
        let t = r.random_range(0.0..=2.0 * PI);
        let rad = if label.is_anomaly() {
            r.random_range(10.0..=12.0)
        } else {
            r.random_range(3.0..=5.0)
        };
        alloc::vec![rad * libm::sin(t), rad * libm::cos(t)]
    })
}

/// One isotropic moment spec per training point.
pub fn default_moment_specs(train: &LabeledDataset, variance: f64) -> Result<Vec<MomentSpec>> {
    if !(variance > 0.0) {
        return Err(Error::input("variance must be positive"));
    }
    train
        .points
        .iter()
        .map(|p| MomentSpec::isotropic(p, variance))
        .collect()
}
