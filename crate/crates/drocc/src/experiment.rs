//! Batch runs and the result tables.
//!
//! Every run is a pure function of its settings and seed, so runs are
//! farmed out to rayon and collected back in submission order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use drocc_core::datasets::DatasetId;
use drocc_core::drcc::{kkt_report, KktReport};
use drocc_core::evaluation::{HyperparamGrid, MetricsReport};
use drocc_core::pipeline::{run_fixed, run_protocol, AnyModel, Method, MethodSettings, RunOutcome};
use drocc_core::uncertainty::DistributionKind;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, TablesConfig};
use crate::{Error, Result};

pub const HEADER: [&str; 13] = [
    "dataset",
    "method",
    "seed",
    "nu",
    "gamma",
    "alpha",
    "acc",
    "pf1",
    "nf1",
    "nut_normal_pf1",
    "nut_uniform_pf1",
    "nut_t_pf1",
    "status",
];

/// What a finished run reports.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub nu: f64,
    pub gamma: f64,
    pub test: MetricsReport,
    /// NUT metrics in the order normal, uniform, student-t.
    pub nut: [MetricsReport; 3],
    /// Grid cells that failed to train, as `nu=.. gamma=..: reason`.
    pub failed_cells: Vec<String>,
    /// KKT residuals of the selected robust model.
    pub kkt: Option<KktReport>,
}

impl RunSummary {
    fn from_outcome(out: &RunOutcome) -> Result<Self> {
        let mut nut = [MetricsReport::default(); 3];
        for (slot, kind) in nut.iter_mut().zip(DistributionKind::EVALUATION) {
            *slot = out
                .nut
                .iter()
                .find(|(k, _)| *k == kind)
                .map(|(_, r)| *r)
                .ok_or_else(|| Error::config("missing NUT distribution"))?;
        }
        let failed_cells = out
            .cells
            .iter()
            .filter_map(|c| {
                c.outcome
                    .as_ref()
                    .err()
                    .map(|e| format!("nu={} gamma={}: {e}", c.nu, c.gamma))
            })
            .collect();
        let kkt = match &out.model {
            AnyModel::Drcc(m) => Some(kkt_report(m)),
            AnyModel::Ocsvm(_) => None,
        };
        Ok(Self {
            nu: out.nu,
            gamma: out.gamma,
            test: out.test,
            nut,
            failed_cells,
            kkt,
        })
    }

    pub fn nut_pf1(&self) -> [f64; 3] {
        [self.nut[0].pf1, self.nut[1].pf1, self.nut[2].pf1]
    }
}

/// One (dataset, method, seed) run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub dataset: DatasetId,
    pub method: Method,
    pub seed: u64,
    pub alpha: Option<f64>,
    /// `Err` carries the failure reason.
    pub result: std::result::Result<RunSummary, String>,
    pub elapsed: Duration,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        match &self.result {
            Ok(s) => !s.failed_cells.is_empty(),
            Err(_) => true,
        }
    }

    pub fn status(&self) -> String {
        match &self.result {
            Ok(s) if s.failed_cells.is_empty() => "ok".into(),
            Ok(s) => format!(
                "FAILED: {} grid cell(s) failed: {}",
                s.failed_cells.len(),
                s.failed_cells.join("; ")
            ),
            Err(e) => format!("FAILED: {e}"),
        }
    }

    fn csv_fields(&self) -> Vec<String> {
        let pct = |v: f64| format!("{:.2}", v * 100.0);
        let mut f = vec![
            self.dataset.name().to_string(),
            self.method.name().to_string(),
            self.seed.to_string(),
        ];
        let alpha = self.alpha.map(|a| a.to_string()).unwrap_or_default();
        match &self.result {
            Ok(s) => {
                f.extend([s.nu.to_string(), s.gamma.to_string(), alpha]);
                f.extend([s.test.acc, s.test.pf1, s.test.nf1].map(pct));
                f.extend(s.nut_pf1().map(pct));
            }
            Err(_) => {
                f.extend([String::new(), String::new(), alpha]);
                f.extend(std::iter::repeat(String::new()).take(6));
            }
        }
        f.push(self.status());
        f
    }
}

/// Called once per finished run, from whichever worker finished it.
pub type Progress<'a> = &'a (dyn Fn(&RunRecord) + Sync);

pub fn no_progress(_: &RunRecord) {}

/// Holdout-select, train and evaluate one run. Failures end up in the
/// record rather than in the return value.
pub fn run_one(
    id: DatasetId,
    settings: &MethodSettings,
    grid: &HyperparamGrid,
    n_eval: usize,
    seed: u64,
) -> RunRecord {
    let start = Instant::now();
    let result = run_protocol(id, settings, grid, n_eval, seed)
        .map_err(|e| e.to_string())
        .and_then(|out| RunSummary::from_outcome(&out).map_err(|e| e.to_string()));
    RunRecord {
        dataset: id,
        method: settings.method,
        seed,
        alpha: (settings.method != Method::Ocsvm).then_some(settings.alpha),
        result,
        elapsed: start.elapsed(),
    }
}

/// Run a config over its seeds. Rows come back in seed order.
pub fn run_experiment(cfg: &ExperimentConfig, progress: Progress) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let settings = cfg.settings();
    let id = cfg.dataset_id();
    let n_eval = cfg.n_eval();
    Ok(cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let rec = run_one(id, &settings, &grid, n_eval, seed);
            progress(&rec);
            rec
        })
        .collect())
}

pub fn write_rows<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn rows_to_string(records: &[RunRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_rows(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Metrics on the NUT sets of a single fixed-parameter run, one entry per
/// evaluation distribution.
#[derive(Debug, Clone)]
pub struct Table1 {
    pub seed: u64,
    pub nu: f64,
    pub gamma: f64,
    pub result: std::result::Result<[MetricsReport; 3], String>,
    pub kkt: Option<KktReport>,
}

impl Table1 {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "normal", "uniform", "student_t"])?;
        for (name, get) in [
            (
                "acc",
                (|r: &MetricsReport| r.acc) as fn(&MetricsReport) -> f64,
            ),
            ("pf1", |r| r.pf1),
            ("nf1", |r| r.nf1),
        ] {
            let mut rec = vec![name.to_string()];
            match &self.result {
                Ok(reps) => rec.extend(reps.iter().map(|r| format!("{:.2}", get(r) * 100.0))),
                Err(e) => rec.extend(std::iter::repeat(format!("FAILED: {e}")).take(3)),
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn run_table1(cfg: &TablesConfig) -> Table1 {
    let (nu, gamma) = cfg.table1_cell();
    let seed = cfg.seeds()[0];
    let settings = cfg.settings(Method::KdrccSampling);
    let out = run_fixed(DatasetId::D1, &settings, nu, gamma, cfg.n_eval(), seed);
    let (result, kkt) = match out {
        Ok(out) => match RunSummary::from_outcome(&out) {
            Ok(s) => (Ok(s.nut), s.kkt),
            Err(e) => (Err(e.to_string()), None),
        },
        Err(e) => (Err(e.to_string()), None),
    };
    Table1 {
        seed,
        nu,
        gamma,
        result,
        kkt,
    }
}

#[derive(Debug, Clone)]
pub struct Tables {
    pub table1: Table1,
    /// KDRCC-Sampling block, then the baseline block; each D1..D3 by seed.
    pub table2: Vec<RunRecord>,
    /// Clustering I block, then Clustering II.
    pub table3: Vec<RunRecord>,
}

impl Tables {
    pub fn failed(&self) -> bool {
        self.table1.result.is_err()
            || self
                .table2
                .iter()
                .chain(&self.table3)
                .any(RunRecord::failed)
    }

    /// Write `table1.csv`, `table2.csv` and `table3.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("table1.csv", self.table1.to_csv()?),
            ("table2.csv", rows_to_string(&self.table2)?),
            ("table3.csv", rows_to_string(&self.table3)?),
        ];
        let mut paths = Vec::new();
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Compute all three tables. Nothing is written.
pub fn reproduce_tables(cfg: &TablesConfig, progress: Progress) -> Result<Tables> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let seeds = cfg.seeds();
    let blocks = [
        Method::KdrccSampling,
        Method::Ocsvm,
        Method::KdrccClusteringI,
        Method::KdrccClusteringII,
    ];
    let mut jobs = Vec::new();
    for method in blocks {
        for id in DatasetId::ALL {
            for &seed in &seeds {
                jobs.push((id, method, seed));
            }
        }
    }
    let (table1, mut records) = rayon::join(
        || run_table1(cfg),
        || {
            jobs.par_iter()
                .map(|&(id, method, seed)| {
                    let rec = run_one(id, &cfg.settings(method), &grid, cfg.n_eval(), seed);
                    progress(&rec);
                    rec
                })
                .collect::<Vec<_>>()
        },
    );
    let table3 = records.split_off(records.len() / 2);
    Ok(Tables {
        table1,
        table2: records,
        table3,
    })
}
