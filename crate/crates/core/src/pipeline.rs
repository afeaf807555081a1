//! One experiment run: samples for the chosen method, holdout selection over
//! `(nu, gamma)`, test metrics and NUT metrics.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::datasets::{default_moment_specs, DatasetId, LabeledDataset};
use crate::drcc::{self, DrccModel, ReducedSocp, SocpProblem, SolveStatus, DEFAULT_JITTER};
use crate::evaluation::{
    evaluate, holdout_select, nut_metrics, CellResult, GridTrainer, HyperparamGrid, MetricsReport,
};
use crate::kernel::{build_gram_bundle, KernelParams, DEFAULT_EPS_PSD};
use crate::ocsvm::{train_ocsvm, OcsvmModel};
use crate::qp::QpSettings;
use crate::rng::derive_seed;
use crate::socp::IpmSettings;
use crate::uncertainty::{
    build_kdrcc_clustering_i, build_kdrcc_clustering_ii, build_kdrcc_sampling, DistributionKind,
    SampleSet, DEFAULT_COV_FLOOR,
};
use crate::{Detector, Error, Point, Result};

const SAMPLE_TAG: u64 = 0x5A3;
const NUT_TAG: u64 = 0x4E7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ocsvm,
    KdrccSampling,
    KdrccClusteringI,
    KdrccClusteringII,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Ocsvm,
        Method::KdrccSampling,
        Method::KdrccClusteringI,
        Method::KdrccClusteringII,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ocsvm => "ocsvm",
            Method::KdrccSampling => "kdrcc_sampling",
            Method::KdrccClusteringI => "kdrcc_clustering_i",
            Method::KdrccClusteringII => "kdrcc_clustering_ii",
        }
    }

    pub fn uses_clusters(self) -> bool {
        matches!(self, Method::KdrccClusteringI | Method::KdrccClusteringII)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSettings {
    pub method: Method,
    pub alpha: f64,
    pub n_batch: usize,
    pub k_clusters: usize,
    /// Distribution of the training samples.
    pub kind: DistributionKind,
    /// Isotropic variance of the moment specs; `None` uses the dataset
    /// default.
    pub variance: Option<f64>,
    pub cov_floor: f64,
    pub qp: QpSettings,
    pub ipm: IpmSettings,
}

impl MethodSettings {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            alpha: 0.01,
            n_batch: 5,
            k_clusters: 10,
            kind: DistributionKind::Normal,
            variance: None,
            cov_floor: DEFAULT_COV_FLOOR,
            qp: QpSettings::default(),
            ipm: IpmSettings::default(),
        }
    }
}

/// A trained detector of either family.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Ocsvm(OcsvmModel),
    Drcc(DrccModel),
}

impl Detector for AnyModel {
    fn score(&self, x: &[f64]) -> Result<f64> {
        match self {
            AnyModel::Ocsvm(m) => m.score(x),
            AnyModel::Drcc(m) => m.score(x),
        }
    }
}

pub enum Prepared {
    Ocsvm(KernelParams),
    Drcc(KernelParams, SocpProblem),
}

/// Grid trainer for one method on one training set.
#[derive(Debug, Clone)]
pub struct Trainer {
    settings: MethodSettings,
    points: Vec<Point>,
    samples: Option<SampleSet>,
}

impl Trainer {
    pub fn new(
        train: &LabeledDataset,
        variance: f64,
        settings: MethodSettings,
        seed: u64,
    ) -> Result<Self> {
        let points = train.points.clone();
        let sseed = derive_seed(seed, SAMPLE_TAG);
        let samples = match settings.method {
            Method::Ocsvm => None,
            Method::KdrccSampling => {
                let specs = default_moment_specs(train, variance)?;
                Some(build_kdrcc_sampling(
                    &points,
                    &specs,
                    settings.kind,
                    settings.n_batch,
                    sseed,
                )?)
            }
            Method::KdrccClusteringI => {
                Some(build_kdrcc_clustering_i(&points, settings.k_clusters, sseed)?.1)
            }
            Method::KdrccClusteringII => Some(
                build_kdrcc_clustering_ii(
                    &points,
                    settings.k_clusters,
                    settings.kind,
                    settings.n_batch,
                    sseed,
                    settings.cov_floor,
                )?
                .1,
            ),
        };
        if settings.method != Method::Ocsvm {
            drcc::chebyshev_radius(settings.alpha)?;
        }
        Ok(Self {
            settings,
            points,
            samples,
        })
    }

    pub fn samples(&self) -> Option<&SampleSet> {
        self.samples.as_ref()
    }
}

impl GridTrainer for Trainer {
    type Prepared = Prepared;
    type Model = AnyModel;

    fn prepare(&self, gamma: f64) -> Result<Prepared> {
        let params = KernelParams::new(gamma)?;
        match &self.samples {
            None => Ok(Prepared::Ocsvm(params)),
            Some(samples) => {
                let bundle = Arc::new(build_gram_bundle(samples, params, DEFAULT_EPS_PSD)?);
                let reduced = Arc::new(ReducedSocp::new(&bundle, DEFAULT_JITTER)?);
                let radius = drcc::chebyshev_radius(self.settings.alpha)?;
                let problem = SocpProblem::from_reduced(bundle, reduced, radius, 1.0)?;
                Ok(Prepared::Drcc(params, problem))
            }
        }
    }

    fn fit(&self, prepared: &Prepared, nu: f64) -> Result<AnyModel> {
        match prepared {
            Prepared::Ocsvm(params) => Ok(AnyModel::Ocsvm(train_ocsvm(
                &self.points,
                nu,
                *params,
                &self.settings.qp,
            )?)),
            Prepared::Drcc(params, base) => {
                let problem = base.with_nu(nu)?;
                let solution = drcc::solve(&problem, &self.settings.ipm)?;
                if solution.status != SolveStatus::Optimal {
                    return Err(Error::Solver {
                        iterations: solution.iterations,
                        residual: solution.residuals.primal.max(solution.residuals.dual),
                        reason: alloc::format!(
                            "robust SOCP ended with status {:?}",
                            solution.status
                        ),
                    });
                }
                let samples = self.samples.clone().expect("robust methods carry samples");
                Ok(AnyModel::Drcc(DrccModel::new(
                    problem,
                    solution,
                    samples,
                    *params,
                    self.settings.alpha,
                )?))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub nu: f64,
    pub gamma: f64,
    pub test: MetricsReport,
    /// NUT metrics per evaluation distribution.
    pub nut: Vec<(DistributionKind, MetricsReport)>,
    /// Validation results of every grid cell (empty for fixed runs).
    pub cells: Vec<CellResult>,
    pub model: AnyModel,
}

impl RunOutcome {
    pub fn nut_pf1(&self, kind: DistributionKind) -> Option<f64> {
        self.nut
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, r)| r.pf1)
    }
}

fn finish(
    test: &LabeledDataset,
    variance: f64,
    model: AnyModel,
    nu: f64,
    gamma: f64,
    cells: Vec<CellResult>,
    n_eval: usize,
    seed: u64,
) -> Result<RunOutcome> {
    let metrics = evaluate(&model, test)?;
    let specs = default_moment_specs(test, variance)?;
    let nut = nut_metrics(
        &model,
        test,
        &specs,
        &DistributionKind::EVALUATION,
        n_eval,
        derive_seed(seed, NUT_TAG),
    )?;
    Ok(RunOutcome {
        nu,
        gamma,
        test: metrics,
        nut,
        cells,
        model,
    })
}

/// Full protocol for one dataset and seed: holdout-select `(nu, gamma)` on
/// the validation split, then evaluate the selected model on the test split.
pub fn run_protocol(
    id: DatasetId,
    settings: &MethodSettings,
    grid: &HyperparamGrid,
    n_eval: usize,
    seed: u64,
) -> Result<RunOutcome> {
    let (train, val, test) = id.generate(seed);
    let variance = settings.variance.unwrap_or(id.default_variance());
    let trainer = Trainer::new(&train, variance, *settings, seed)?;
    let sel = holdout_select(&trainer, &val, grid)?;
    finish(
        &test,
        variance,
        sel.model,
        sel.best_nu,
        sel.best_gamma,
        sel.cells,
        n_eval,
        seed,
    )
}

/// Protocol with fixed `(nu, gamma)`: no validation step.
pub fn run_fixed(
    id: DatasetId,
    settings: &MethodSettings,
    nu: f64,
    gamma: f64,
    n_eval: usize,
    seed: u64,
) -> Result<RunOutcome> {
    let (train, _, test) = id.generate(seed);
    let variance = settings.variance.unwrap_or(id.default_variance());
    let trainer = Trainer::new(&train, variance, *settings, seed)?;
    let prepared = trainer.prepare(gamma)?;
    let model = trainer.fit(&prepared, nu)?;
    finish(&test, variance, model, nu, gamma, Vec::new(), n_eval, seed)
}
