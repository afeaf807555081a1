//! Dataset CSV files and serialized models.
//!
//! Dataset files have a header `f1,...,fn,label` with `label` 0 for normal
//! and 1 for anomaly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use drocc_core::datasets::LabeledDataset;
use drocc_core::kernel::{gaussian_kernel, KernelParams};
use drocc_core::pipeline::AnyModel;
use drocc_core::{Detector, Label, Point};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn label_code(l: Label) -> u8 {
    match l {
        Label::Normal => 0,
        Label::Anomaly => 1,
    }
}

pub fn write_dataset<W: Write>(out: W, points: &[Point], labels: &[Label]) -> Result<()> {
    if points.len() != labels.len() {
        return Err(Error::config("points and labels differ in length"));
    }
    let dim = points.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=dim).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (p, l) in points.iter().zip(labels) {
        if p.len() != dim {
            return Err(Error::config("points differ in dimension"));
        }
        let mut rec: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        rec.push(label_code(*l).to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<(Vec<Point>, Vec<Label>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let n = header.len();
    let ok = n >= 2
        && header.get(n - 1) == Some("label")
        && (0..n - 1).all(|j| header.get(j) == Some(format!("f{}", j + 1).as_str()));
    if !ok {
        return Err(Error::config("dataset header must be f1,...,fn,label"));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::config(format!("row {}: {what}", row + 1));
        let mut p = Vec::with_capacity(n - 1);
        for j in 0..n - 1 {
            let v: f64 = rec[j]
                .trim()
                .parse()
                .map_err(|_| bad("non-numeric feature"))?;
            if !v.is_finite() {
                return Err(bad("non-finite feature"));
            }
            p.push(v);
        }
        labels.push(match rec[n - 1].trim() {
            "0" => Label::Normal,
            "1" => Label::Anomaly,
            _ => return Err(bad("label must be 0 or 1")),
        });
        points.push(p);
    }
    Ok((points, labels))
}

pub fn save_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(BufWriter::new(f), &data.points, &data.labels)
}

pub fn load_dataset(path: &Path) -> Result<(Vec<Point>, Vec<Label>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(f)
}

/// A trained model as a kernel expansion:
/// `score(x) = sum_s p_s k(x_s, x) - bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub method: String,
    pub gamma: f64,
    pub nu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub bias: f64,
    pub p: Vec<f64>,
    pub samples: Vec<Point>,
}

impl ModelFile {
    pub fn from_model(model: &AnyModel) -> Self {
        match model {
            AnyModel::Ocsvm(m) => Self {
                method: "ocsvm".into(),
                gamma: m.params.gamma(),
                nu: m.nu,
                alpha: None,
                bias: m.bias,
                p: m.alphas.clone(),
                samples: m.train_points.clone(),
            },
            AnyModel::Drcc(m) => Self {
                method: "kdrcc".into(),
                gamma: m.params.gamma(),
                nu: m.nu,
                alpha: Some(m.alpha),
                bias: m.solution.bias,
                p: m.solution.p.iter().copied().collect(),
                samples: m.pooled_samples().to_vec(),
            },
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.p.len() != m.samples.len() {
            return Err(Error::config("model has mismatched p and samples"));
        }
        KernelParams::new(m.gamma)?;
        Ok(m)
    }
}

impl Detector for ModelFile {
    fn score(&self, x: &[f64]) -> drocc_core::Result<f64> {
        let params = KernelParams::new(self.gamma)?;
        let mut s = 0.0;
        for (xs, p) in self.samples.iter().zip(&self.p) {
            s += p * gaussian_kernel(xs, x, params)?;
        }
        Ok(s - self.bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use drocc_core::datasets::DatasetId;

    #[test]
    fn dataset_round_trip_is_exact() {
        let (train, _, _) = DatasetId::D2.generate(3);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &train.points, &train.labels).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("f1,f2,f3,f4,f5,f6,f7,label\n"));
        let (pts, labels) = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(pts, train.points);
        assert_eq!(labels, train.labels);
    }

    #[test]
    fn rejects_malformed_csv() {
        for text in [
            "x1,label\n1,0\n",
            "f1,f2\n1,2\n",
            "f1,label\nabc,0\n",
            "f1,label\n1,2\n",
            "f1,label\nNaN,0\n",
        ] {
            assert!(read_dataset(text.as_bytes()).is_err(), "{text}");
        }
    }
}
