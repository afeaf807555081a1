//! Metrics, holdout selection and NUT-PF1.
//!
//! Anomaly is the positive class. F1 is `2 tp / (2 tp + fp + fn)`, zero
//! when nothing is predicted or present in the class.

use alloc::string::String;
use alloc::vec::Vec;

use crate::datasets::LabeledDataset;
use crate::rng::derive_seed;
use crate::uncertainty::{sample_with_moments, DistributionKind, MomentSpec};
use crate::{Detector, Error, Label, Result};

/// Number of samples drawn around each test point for NUT-PF1.
pub const DEFAULT_N_EVAL: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub acc: f64,
    pub pf1: f64,
    pub nf1: f64,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn f1(hit: usize, false_pos: usize, false_neg: usize) -> f64 {
    let den = 2 * hit + false_pos + false_neg;
    if hit == 0 || den == 0 {
        0.0
    } else {
        2.0 * hit as f64 / den as f64
    }
}

pub fn compute_metrics(labels: &[Label], predictions: &[Label]) -> Result<MetricsReport> {
    if labels.len() != predictions.len() {
        return Err(Error::input("labels and predictions differ in length"));
    }
    if labels.is_empty() {
        return Err(Error::input("nothing to evaluate"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y.is_anomaly(), p.is_anomaly()) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    Ok(MetricsReport {
        tp,
        fp,
        tn,
        fn_,
        acc: (tp + tn) as f64 / labels.len() as f64,
        pf1: f1(tp, fp, fn_),
        nf1: f1(tn, fn_, fp),
    })
}

pub fn predict<D: Detector + ?Sized>(model: &D, points: &[crate::Point]) -> Result<Vec<Label>> {
    points
        .iter()
        .map(|x| model.decide(x).map(|(_, l)| l))
        .collect()
}

/// Metrics of `model` on a labelled set.
pub fn evaluate<D: Detector + ?Sized>(model: &D, data: &LabeledDataset) -> Result<MetricsReport> {
    compute_metrics(&data.labels, &predict(model, &data.points)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperparamGrid {
    nus: Vec<f64>,
    gammas: Vec<f64>,
}

impl HyperparamGrid {
    pub fn new(nus: Vec<f64>, gammas: Vec<f64>) -> Result<Self> {
        if nus.is_empty() || gammas.is_empty() {
            return Err(Error::input("grid needs at least one nu and one gamma"));
        }
        if nus.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::input("grid nu values must lie in (0, 1]"));
        }
        if gammas.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::input("grid gamma values must be positive"));
        }
        Ok(Self { nus, gammas })
    }

    pub fn nus(&self) -> &[f64] {
        &self.nus
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn len(&self) -> usize {
        self.nus.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for HyperparamGrid {
    fn default() -> Self {
        Self {
            nus: alloc::vec![0.01, 0.05, 0.1, 0.2, 0.37, 0.5],
            gammas: alloc::vec![1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 0.00098],
        }
    }
}

/// Something trainable over a `(nu, gamma)` grid. `prepare` does the work
/// that depends only on `gamma` so it can be shared across `nu`.
pub trait GridTrainer {
    type Prepared;
    type Model: Detector;

    fn prepare(&self, gamma: f64) -> Result<Self::Prepared>;
    fn fit(&self, prepared: &Self::Prepared, nu: f64) -> Result<Self::Model>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub nu: f64,
    pub gamma: f64,
    /// Validation PF1, or the training failure.
    pub outcome: core::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct HoldoutResult<M> {
    pub best_nu: f64,
    pub best_gamma: f64,
    pub best_pf1: f64,
    pub cells: Vec<CellResult>,
    /// The model trained at the selected cell.
    pub model: M,
}

/// `true` if `(pf1, gamma, nu)` beats the incumbent: higher PF1, then
/// smaller gamma, then smaller nu.
fn better(cand: (f64, f64, f64), best: (f64, f64, f64)) -> bool {
    if cand.0 != best.0 {
        return cand.0 > best.0;
    }
    if cand.1 != best.1 {
        return cand.1 < best.1;
    }
    cand.2 < best.2
}

/// Train every grid cell, score PF1 on `validation`, keep the best.
pub fn holdout_select<T: GridTrainer>(
    trainer: &T,
    validation: &LabeledDataset,
    grid: &HyperparamGrid,
) -> Result<HoldoutResult<T::Model>> {
    let mut cells = Vec::with_capacity(grid.len());
    let mut best: Option<((f64, f64, f64), T::Model)> = None;
    for &gamma in grid.gammas() {
        let prepared = match trainer.prepare(gamma) {
            Ok(p) => p,
            Err(e) => {
                for &nu in grid.nus() {
                    cells.push(CellResult {
                        nu,
                        gamma,
                        outcome: Err(alloc::format!("{e}")),
                    });
                }
                continue;
            }
        };
        for &nu in grid.nus() {
            let scored = trainer
                .fit(&prepared, nu)
                .and_then(|m| evaluate(&m, validation).map(|r| (r.pf1, m)));
            match scored {
                Ok((pf1, model)) => {
                    cells.push(CellResult {
                        nu,
                        gamma,
                        outcome: Ok(pf1),
                    });
                    let key = (pf1, gamma, nu);
                    if best.as_ref().map_or(true, |(b, _)| better(key, *b)) {
                        best = Some((key, model));
                    }
                }
                Err(e) => cells.push(CellResult {
                    nu,
                    gamma,
                    outcome: Err(alloc::format!("{e}")),
                }),
            }
        }
    }
    match best {
        Some(((pf1, gamma, nu), model)) => Ok(HoldoutResult {
            best_nu: nu,
            best_gamma: gamma,
            best_pf1: pf1,
            cells,
            model,
        }),
        None => {
            let mut reason = String::from("every grid cell failed:");
            for c in &cells {
                if let Err(e) = &c.outcome {
                    reason.push_str(&alloc::format!(" [nu={} gamma={}: {}]", c.nu, c.gamma, e));
                }
            }
            Err(Error::Solver {
                iterations: 0,
                residual: f64::NAN,
                reason,
            })
        }
    }
}

/// NUT metrics: for each kind, `n_eval` samples around every test point
/// (moments from `specs_for_test`), labelled with their parent's label and
/// classified by `model`.
pub fn nut_metrics<D: Detector + ?Sized>(
    model: &D,
    test: &LabeledDataset,
    specs_for_test: &[MomentSpec],
    kinds: &[DistributionKind],
    n_eval: usize,
    seed: u64,
) -> Result<Vec<(DistributionKind, MetricsReport)>> {
    if n_eval == 0 {
        return Err(Error::input("n_eval must be at least 1"));
    }
    if specs_for_test.len() != test.len() {
        return Err(Error::input("one moment spec per test point is required"));
    }
    let mut out = Vec::with_capacity(kinds.len());
    for (k, &kind) in kinds.iter().enumerate() {
        let kind_seed = derive_seed(seed, k as u64);
        let mut labels = Vec::with_capacity(test.len() * n_eval);
        let mut preds = Vec::with_capacity(test.len() * n_eval);
        for (j, (spec, &label)) in specs_for_test.iter().zip(&test.labels).enumerate() {
            for x in sample_with_moments(spec, kind, n_eval, derive_seed(kind_seed, j as u64))? {
                labels.push(label);
                preds.push(model.decide(&x)?.1);
            }
        }
        out.push((kind, compute_metrics(&labels, &preds)?));
    }
    Ok(out)
}

/// PF1 per kind of [`nut_metrics`].
pub fn nut_pf1<D: Detector + ?Sized>(
    model: &D,
    test: &LabeledDataset,
    specs_for_test: &[MomentSpec],
    kinds: &[DistributionKind],
    n_eval: usize,
    seed: u64,
) -> Result<Vec<(DistributionKind, f64)>> {
    Ok(
        nut_metrics(model, test, specs_for_test, kinds, n_eval, seed)?
            .into_iter()
            .map(|(k, r)| (k, r.pf1))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_d1, Split};
    use crate::Point;
    use proptest::prelude::*;

    use Label::{Anomaly as A, Normal as N};

    #[test]
    fn perfect_predictions() {
        let y = [N, A, N, A];
        let r = compute_metrics(&y, &y).unwrap();
        assert_eq!((r.acc, r.pf1, r.nf1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn worked_counts() {
        // tp 4, fp 1, fn 1, tn 34
        let mut y = alloc::vec![A; 5];
        y.extend([N; 35]);
        let mut p = alloc::vec![A, A, A, A, N];
        p.push(A);
        p.extend([N; 34]);
        let r = compute_metrics(&y, &p).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (4, 1, 1, 34));
        assert!((r.pf1 - 0.8).abs() < 1e-15);
        assert!((r.acc - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_over_zero() {
        let r = compute_metrics(&[N, N], &[N, N]).unwrap();
        assert_eq!(r.pf1, 0.0);
        assert_eq!(r.nf1, 1.0);
        assert!(compute_metrics(&[N], &[]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    fn flip(v: &[Label]) -> Vec<Label> {
        v.iter()
            .map(|l| if l.is_anomaly() { N } else { A })
            .collect()
    }

    proptest! {
        #[test]
        fn permutation_and_complement(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60),
                                      rot in 0usize..60) {
            let y: Vec<Label> = pairs.iter().map(|p| if p.0 { A } else { N }).collect();
            let p: Vec<Label> = pairs.iter().map(|p| if p.1 { A } else { N }).collect();
            let r = compute_metrics(&y, &p).unwrap();
            let k = rot % y.len();
            let mut y2 = y.clone();
            let mut p2 = p.clone();
            y2.rotate_left(k);
            p2.rotate_left(k);
            y2.reverse();
            p2.reverse();
            prop_assert_eq!(r, compute_metrics(&y2, &p2).unwrap());
            let c = compute_metrics(&flip(&y), &flip(&p)).unwrap();
            prop_assert_eq!(c.pf1, r.nf1);
            prop_assert_eq!(c.nf1, r.pf1);
            prop_assert_eq!(r.total(), y.len());
        }
    }

    /// Labels points by which side of x0 = 1 they fall on.
    struct Threshold;

    impl Detector for Threshold {
        fn score(&self, x: &[f64]) -> Result<f64> {
            Ok(x[0] - 1.0)
        }
    }

    fn toy_set() -> LabeledDataset {
        let points: Vec<Point> = alloc::vec![
            alloc::vec![2.0, 0.0],
            alloc::vec![3.0, 0.0],
            alloc::vec![-5.0, 0.0],
        ];
        LabeledDataset {
            points,
            labels: alloc::vec![N, N, A],
            split: Split::Test,
            seed: 0,
        }
    }

    #[test]
    fn nut_with_separating_model_is_perfect() {
        let t = toy_set();
        let specs: Vec<MomentSpec> = t
            .points
            .iter()
            .map(|p| MomentSpec::isotropic(p, 0.01).unwrap())
            .collect();
        let r = nut_pf1(&Threshold, &t, &specs, &DistributionKind::EVALUATION, 20, 1).unwrap();
        assert_eq!(r.len(), 3);
        for (_, pf1) in &r {
            assert_eq!(*pf1, 1.0);
        }
        assert_eq!(
            r,
            nut_pf1(&Threshold, &t, &specs, &DistributionKind::EVALUATION, 20, 1).unwrap()
        );
        assert!(nut_pf1(&Threshold, &t, &specs, &DistributionKind::EVALUATION, 0, 1).is_err());
    }

    /// Trainer whose validation PF1 is a fixed function of the cell.
    struct Table(Vec<((f64, f64), Label)>);

    struct Const(Label);

    impl Detector for Const {
        fn score(&self, _: &[f64]) -> Result<f64> {
            Ok(if self.0.is_anomaly() { -1.0 } else { 1.0 })
        }
    }

    impl GridTrainer for Table {
        type Prepared = f64;
        type Model = Const;

        fn prepare(&self, gamma: f64) -> Result<f64> {
            Ok(gamma)
        }

        fn fit(&self, gamma: &f64, nu: f64) -> Result<Const> {
            self.0
                .iter()
                .find(|((n, g), _)| *n == nu && *g == *gamma)
                .map(|(_, l)| Const(*l))
                .ok_or_else(|| Error::input("cell fails"))
        }
    }

    #[test]
    fn holdout_picks_max_with_tie_break() {
        let (_, val, _) = gen_d1(0);
        let grid = HyperparamGrid::new(alloc::vec![0.1, 0.5], alloc::vec![1.0, 0.01]).unwrap();
        // predicting all anomalies gives PF1 = 2*5/(2*5+35) > 0; all normal gives 0
        let t = Table(alloc::vec![
            ((0.1, 1.0), A),
            ((0.5, 1.0), N),
            ((0.5, 0.01), A),
        ]);
        let r = holdout_select(&t, &val, &grid).unwrap();
        assert_eq!((r.best_nu, r.best_gamma), (0.5, 0.01));
        assert_eq!(r.cells.len(), 4);
        assert_eq!(r.cells.iter().filter(|c| c.outcome.is_err()).count(), 1);
        let max = r
            .cells
            .iter()
            .filter_map(|c| c.outcome.as_ref().ok())
            .fold(0.0f64, |a, &b| a.max(b));
        assert_eq!(r.best_pf1, max);

        let single = HyperparamGrid::new(alloc::vec![0.1], alloc::vec![1.0]).unwrap();
        let r = holdout_select(&t, &val, &single).unwrap();
        assert_eq!((r.best_nu, r.best_gamma), (0.1, 1.0));

        let none = Table(alloc::vec![]);
        assert!(holdout_select(&none, &val, &grid).is_err());
    }

    #[test]
    fn default_grid_contents() {
        let g = HyperparamGrid::default();
        assert_eq!(g.len(), 42);
        assert!(g.nus().contains(&0.37));
        assert!(g.gammas().contains(&0.00098));
        assert!(HyperparamGrid::new(alloc::vec![], alloc::vec![1.0]).is_err());
        assert!(HyperparamGrid::new(alloc::vec![1.5], alloc::vec![1.0]).is_err());
    }
}
