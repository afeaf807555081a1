//! Command line front end. Exit codes: 0 success, 1 bad input or config,
//! 2 solver failure (including any FAILED row).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use drocc_core::datasets::DatasetId;
use drocc_core::pipeline::{AnyModel, Method, MethodSettings};

use crate::check::{as_train, solve_instance, verify_model};
use crate::config::{ExperimentConfig, TablesConfig};
use crate::experiment::{reproduce_tables, run_experiment, write_rows, RunRecord};
use crate::io::{load_dataset, save_dataset, ModelFile};
use crate::{Error, Result};

pub const JOBS_ENV: &str = "DROCC_JOBS";

#[derive(Debug, Parser)]
#[command(name = "drocc", version, about = "Robust one-class SVM experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn parse_dataset(s: &str) -> std::result::Result<DatasetId, String> {
    DatasetId::ALL
        .into_iter()
        .find(|d| d.name() == s)
        .ok_or_else(|| format!("unknown dataset {s:?} (expected d1, d2 or d3)"))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the train, validation and test splits of a dataset as CSV.
    Generate {
        #[arg(long, value_parser = parse_dataset)]
        dataset: DatasetId,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; files are named `<dataset>_<split>.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment config and write its result rows.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; defaults to `output_path` from the config, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write table1.csv, table2.csv and table3.csv.
    ReproduceTables {
        /// Optional JSON overriding seeds, grid and method settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Solve one KDRCC-Sampling instance and verify its KKT conditions and
    /// robust constraints.
    Check {
        #[arg(long, value_parser = parse_dataset, default_value = "d1")]
        dataset: DatasetId,
        /// Training CSV to use instead of the generated training split.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.37)]
        nu: f64,
        #[arg(long, default_value_t = 0.00098)]
        gamma: f64,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 5)]
        n_batch: usize,
        /// Moment variance; defaults to the dataset's.
        #[arg(long)]
        variance: Option<f64>,
        /// Random probes per constraint ellipsoid.
        #[arg(long, default_value_t = 1000)]
        probes: usize,
        /// Save the solved model as JSON.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
}

/// `--jobs`, else `DROCC_JOBS`, else rayon's default.
fn resolve_jobs(flag: Option<usize>) -> Result<Option<usize>> {
    let jobs =
        match flag {
            Some(j) => Some(j),
            None => match std::env::var(JOBS_ENV) {
                Ok(v) => Some(v.trim().parse().map_err(|_| {
                    Error::config(format!("{JOBS_ENV} must be an integer, got {v:?}"))
                })?),
                Err(_) => None,
            },
        };
    if jobs == Some(0) {
        return Err(Error::config("jobs must be at least 1"));
    }
    Ok(jobs)
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j);
    }
    let pool = b.build().map_err(|e| Error::config(e.to_string()))?;
    Ok(pool.install(f))
}

fn report(rec: &RunRecord) {
    let status = if rec.failed() { "FAILED" } else { "ok" };
    eprintln!(
        "{} {} seed {}: {status} ({:.1}s)",
        rec.dataset.name(),
        rec.method.name(),
        rec.seed,
        rec.elapsed.as_secs_f64()
    );
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate { dataset, seed, out } => {
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let (tr, va, te) = dataset.generate(seed);
            for (name, d) in [("train", &tr), ("validation", &va), ("test", &te)] {
                let path = out.join(format!("{}_{name}.csv", dataset.name()));
                save_dataset(&path, d)?;
                eprintln!("wrote {}", path.display());
            }
            Ok(0)
        }
        Command::Run {
            config,
            out,
            seed,
            jobs,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let jobs = resolve_jobs(jobs)?;
            let records = with_pool(jobs, || run_experiment(&cfg, &report))??;
            match out.or(cfg.output_path.clone()) {
                Some(path) => write_rows(std::io::BufWriter::new(create(&path)?), &records)?,
                None => write_rows(std::io::stdout().lock(), &records)?,
            }
            Ok(if records.iter().any(RunRecord::failed) {
                2
            } else {
                0
            })
        }
        Command::ReproduceTables {
            config,
            out,
            seed,
            jobs,
        } => {
            let mut cfg = match config {
                Some(p) => TablesConfig::from_path(&p)?,
                None => TablesConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seeds = Some(vec![s]);
            }
            let jobs = resolve_jobs(jobs)?;
            let tables = with_pool(jobs, || reproduce_tables(&cfg, &report))??;
            for p in tables.write(&out)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(if tables.failed() { 2 } else { 0 })
        }
        Command::Check {
            dataset,
            train,
            seed,
            nu,
            gamma,
            alpha,
            n_batch,
            variance,
            probes,
            model_out,
        } => {
            let data = match train {
                Some(path) => {
                    let (points, labels) = load_dataset(&path)?;
                    as_train(points, labels)
                }
                None => dataset.generate(seed).0,
            };
            let mut settings = MethodSettings::new(Method::KdrccSampling);
            settings.alpha = alpha;
            settings.n_batch = n_batch;
            let variance = variance.unwrap_or(dataset.default_variance());
            let model = solve_instance(&data, variance, settings, nu, gamma, seed)?;
            let lines = verify_model(&model, probes, seed)?;
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(
                stdout,
                "solved l={} m={} in {} iterations, objective {:.10}",
                model.problem().l(),
                model.problem().m(),
                model.solution.iterations,
                model.solution.objective
            );
            for l in &lines {
                let _ = writeln!(stdout, "{l}");
            }
            if let Some(path) = model_out {
                ModelFile::from_model(&AnyModel::Drcc(model)).save(&path)?;
            }
            Ok(if lines.iter().all(|l| l.pass()) { 0 } else { 2 })
        }
    }
}

/// Parse `args` and run. Never panics on bad input; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
