//! JSON experiment configs. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use drocc_core::datasets::DatasetId;
use drocc_core::evaluation::{HyperparamGrid, DEFAULT_N_EVAL};
use drocc_core::pipeline::{Method, MethodSettings};
use drocc_core::uncertainty::DistributionKind;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetName {
    #[serde(rename = "d1")]
    D1,
    #[serde(rename = "d2")]
    D2,
    #[serde(rename = "d3")]
    D3,
}

impl From<DatasetName> for DatasetId {
    fn from(d: DatasetName) -> Self {
        match d {
            DatasetName::D1 => DatasetId::D1,
            DatasetName::D2 => DatasetId::D2,
            DatasetName::D3 => DatasetId::D3,
        }
    }
}

impl From<DatasetId> for DatasetName {
    fn from(d: DatasetId) -> Self {
        match d {
            DatasetId::D1 => DatasetName::D1,
            DatasetId::D2 => DatasetName::D2,
            DatasetId::D3 => DatasetName::D3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodName {
    #[serde(rename = "ocsvm")]
    Ocsvm,
    #[serde(rename = "kdrcc_sampling")]
    KdrccSampling,
    #[serde(rename = "kdrcc_clustering_i")]
    KdrccClusteringI,
    #[serde(rename = "kdrcc_clustering_ii")]
    KdrccClusteringII,
}

impl From<MethodName> for Method {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Ocsvm => Method::Ocsvm,
            MethodName::KdrccSampling => Method::KdrccSampling,
            MethodName::KdrccClusteringI => Method::KdrccClusteringI,
            MethodName::KdrccClusteringII => Method::KdrccClusteringII,
        }
    }
}

/// Sampling distribution; `student_t` means 7 degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KindName {
    #[serde(rename = "normal")]
    Normal,
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "student_t")]
    StudentT,
}

impl From<KindName> for DistributionKind {
    fn from(k: KindName) -> Self {
        match k {
            KindName::Normal => DistributionKind::Normal,
            KindName::Uniform => DistributionKind::Uniform,
            KindName::StudentT => DistributionKind::StudentT { dof: 7 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nus: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl GridConfig {
    pub fn to_grid(&self) -> Result<HyperparamGrid> {
        HyperparamGrid::new(self.nus.clone(), self.gammas.clone())
            .map_err(|e| Error::config(format!("grid: {e}")))
    }
}

fn grid_or_default(grid: &Option<GridConfig>) -> Result<HyperparamGrid> {
    grid.as_ref()
        .map_or_else(|| Ok(HyperparamGrid::default()), GridConfig::to_grid)
}

/// One `run` invocation: a method on a dataset over a list of seeds.
///
/// Optional fields fall back to the defaults of [`MethodSettings::new`];
/// fields the method does not use are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetName,
    pub method: MethodName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_clusters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<KindName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_eval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::config(format!("{name} must be at least 1")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let method = Method::from(self.method);
        let unused = |name: &str| {
            Err(Error::config(format!(
                "{name} is not used by method {}",
                method.name()
            )))
        };
        if let Some(a) = self.alpha {
            if method == Method::Ocsvm {
                return unused("alpha");
            }
            check_alpha(a)?;
        }
        if let Some(n) = self.n_batch {
            if matches!(method, Method::Ocsvm | Method::KdrccClusteringI) {
                return unused("n_batch");
            }
            check_positive("n_batch", n)?;
        }
        if let Some(k) = self.k_clusters {
            if !method.uses_clusters() {
                return unused("k_clusters");
            }
            check_positive("k_clusters", k)?;
        }
        if self.kind.is_some() && matches!(method, Method::Ocsvm | Method::KdrccClusteringI) {
            return unused("kind");
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if let Some(n) = self.n_eval {
            check_positive("n_eval", n)?;
        }
        self.grid()?;
        Ok(())
    }

    pub fn dataset_id(&self) -> DatasetId {
        self.dataset.into()
    }

    pub fn settings(&self) -> MethodSettings {
        let mut s = MethodSettings::new(self.method.into());
        if let Some(a) = self.alpha {
            s.alpha = a;
        }
        if let Some(n) = self.n_batch {
            s.n_batch = n;
        }
        if let Some(k) = self.k_clusters {
            s.k_clusters = k;
        }
        if let Some(k) = self.kind {
            s.kind = k.into();
        }
        s
    }

    pub fn grid(&self) -> Result<HyperparamGrid> {
        grid_or_default(&self.grid)
    }

    pub fn n_eval(&self) -> usize {
        self.n_eval.unwrap_or(DEFAULT_N_EVAL)
    }
}

/// Settings for `reproduce-tables`. Every field is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_eval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_clusters: Option<usize>,
    /// Fixed `(nu, gamma)` of the single-dataset table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table1_nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table1_gamma: Option<f64>,
}

impl TablesConfig {
    pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];
    pub const TABLE1_NU: f64 = 0.37;
    pub const TABLE1_GAMMA: f64 = 0.00098;

    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.as_ref().is_some_and(|s| s.is_empty()) {
            return Err(Error::config("seeds must not be empty"));
        }
        if let Some(a) = self.alpha {
            check_alpha(a)?;
        }
        for (name, v) in [
            ("n_eval", self.n_eval),
            ("n_batch", self.n_batch),
            ("k_clusters", self.k_clusters),
        ] {
            if let Some(v) = v {
                check_positive(name, v)?;
            }
        }
        if let Some(nu) = self.table1_nu {
            if !(nu > 0.0 && nu <= 1.0) {
                return Err(Error::config(format!(
                    "table1_nu must lie in (0, 1], got {nu}"
                )));
            }
        }
        if let Some(g) = self.table1_gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::config(format!(
                    "table1_gamma must be positive, got {g}"
                )));
            }
        }
        self.grid()?;
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds
            .clone()
            .unwrap_or_else(|| Self::DEFAULT_SEEDS.to_vec())
    }

    pub fn grid(&self) -> Result<HyperparamGrid> {
        grid_or_default(&self.grid)
    }

    pub fn n_eval(&self) -> usize {
        self.n_eval.unwrap_or(DEFAULT_N_EVAL)
    }

    pub fn settings(&self, method: Method) -> MethodSettings {
        let mut s = MethodSettings::new(method);
        if let Some(a) = self.alpha {
            s.alpha = a;
        }
        if let Some(n) = self.n_batch {
            s.n_batch = n;
        }
        if let Some(k) = self.k_clusters {
            s.k_clusters = k;
        }
        s
    }

    pub fn table1_cell(&self) -> (f64, f64) {
        (
            self.table1_nu.unwrap_or(Self::TABLE1_NU),
            self.table1_gamma.unwrap_or(Self::TABLE1_GAMMA),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"dataset":"d1","method":"kdrcc_sampling","seeds":[0]}"#,
        )
        .unwrap();
        let s = cfg.settings();
        assert_eq!(s.method, Method::KdrccSampling);
        assert_eq!(s.alpha, 0.01);
        assert_eq!(s.n_batch, 5);
        assert_eq!(cfg.n_eval(), DEFAULT_N_EVAL);
        assert_eq!(cfg.grid().unwrap(), HyperparamGrid::default());
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"{"dataset":"d3","method":"kdrcc_clustering_ii","alpha":0.05,"n_batch":4,
            "k_clusters":6,"kind":"student_t","grid":{"nus":[0.1],"gammas":[1.0]},
            "seeds":[1,2],"n_eval":3,"output_path":"out.csv"}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let s = cfg.settings();
        assert_eq!(s.kind, DistributionKind::StudentT { dof: 7 });
        assert_eq!((s.alpha, s.n_batch, s.k_clusters), (0.05, 4, 6));
        let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            r#"{"dataset":"d4","method":"ocsvm","seeds":[0]}"#,
            r#"{"dataset":"d1","method":"svm","seeds":[0]}"#,
            r#"{"dataset":"d1","method":"ocsvm","seeds":[0],"extra":1}"#,
            r#"{"dataset":"d1","method":"ocsvm","seeds":[]}"#,
            r#"{"dataset":"d1","method":"ocsvm","seeds":[0],"alpha":0.1}"#,
            r#"{"dataset":"d1","method":"kdrcc_sampling","seeds":[0],"alpha":1.0}"#,
            r#"{"dataset":"d1","method":"kdrcc_sampling","seeds":[0],"k_clusters":3}"#,
            r#"{"dataset":"d1","method":"kdrcc_clustering_i","seeds":[0],"n_batch":3}"#,
            r#"{"dataset":"d1","method":"kdrcc_sampling","seeds":[0],"grid":{"nus":[],"gammas":[1]}}"#,
            r#"{"dataset":"d1","method":"kdrcc_sampling","seeds":[0],"grid":{"nus":[0.1],"gammas":[1],"x":2}}"#,
            r#"{"method":"ocsvm","seeds":[0]}"#,
        ];
        for text in bad {
            let e = ExperimentConfig::from_json(text).unwrap_err();
            assert_eq!(e.exit_code(), 1, "{text}");
        }
    }

    #[test]
    fn tables_config_defaults() {
        let t: TablesConfig = serde_json::from_str("{}").unwrap();
        t.validate().unwrap();
        assert_eq!(t.seeds(), vec![0, 1, 2]);
        assert_eq!(t.table1_cell(), (0.37, 0.00098));
        assert!(serde_json::from_str::<TablesConfig>(r#"{"seed":[1]}"#).is_err());
        let t: TablesConfig = serde_json::from_str(r#"{"seeds":[]}"#).unwrap();
        assert!(t.validate().is_err());
    }
}
