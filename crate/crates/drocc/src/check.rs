//! Verification suite for one solved robust model: KKT residuals and
//! ellipsoid probing of every constraint.

use std::fmt;

use drocc_core::datasets::{LabeledDataset, Split};
use drocc_core::drcc::{kkt_report, robust_constraint_check, DrccModel};
use drocc_core::evaluation::GridTrainer;
use drocc_core::pipeline::{AnyModel, Method, MethodSettings, Trainer};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
}

impl CheckLine {
    pub fn pass(&self) -> bool {
        self.value <= self.tol
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass() { "PASS" } else { "FAIL" };
        // `+ 0.0` turns a negative zero into zero
        let v = self.value + 0.0;
        write!(f, "{tag} {:<24} {v:.3e} (tol {:.0e})", self.name, self.tol)
    }
}

/// Residuals and probe results for `model`; `probes` random points per
/// constraint ellipsoid.
pub fn verify_model(model: &DrccModel, probes: usize, seed: u64) -> Result<Vec<CheckLine>> {
    let k = kkt_report(model);
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut tight: f64 = 0.0;
    for i in 0..model.problem().l() {
        let r = robust_constraint_check(model, i, probes, seed)?;
        violations += r.violations;
        worst = worst.max(r.max_violation);
        tight = tight.max(r.tightness);
    }
    let line = |name, value, tol| CheckLine { name, value, tol };
    Ok(vec![
        line("soc_feasibility", k.soc_violation, 1e-6),
        line("sign", k.sign_violation, 1e-6),
        line("sum_gamma", k.sum_gamma, 1e-5),
        line("gamma_box", k.gamma_box, 1e-6),
        line("complementary", k.complementary, 1e-5),
        line("xi_complementary", k.xi_complementary, 1e-5),
        line("probe_violations", violations as f64, 0.0),
        line("probe_max_violation", worst.max(0.0), 1e-6),
        line("support_tightness", tight, 1e-6),
    ])
}

/// Train KDRCC-Sampling at a fixed `(nu, gamma)` on `train`.
pub fn solve_instance(
    train: &LabeledDataset,
    variance: f64,
    settings: MethodSettings,
    nu: f64,
    gamma: f64,
    seed: u64,
) -> Result<DrccModel> {
    if settings.method == Method::Ocsvm {
        return Err(Error::config("check needs a robust method"));
    }
    let trainer = Trainer::new(train, variance, settings, seed)?;
    match trainer.fit(&trainer.prepare(gamma)?, nu)? {
        AnyModel::Drcc(m) => Ok(m),
        AnyModel::Ocsvm(_) => unreachable!("robust method yields a robust model"),
    }
}

/// Wrap loaded points as a training split.
pub fn as_train(points: Vec<drocc_core::Point>, labels: Vec<drocc_core::Label>) -> LabeledDataset {
    LabeledDataset {
        points,
        labels,
        split: Split::Train,
        seed: 0,
    }
}
