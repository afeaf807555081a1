//! Distributionally robust chance-constrained one-class SVM.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. Everything here is a pure function of its inputs; randomness is
//! always driven by an explicit seed.
//!
//! Module map:
//!
//! - [`kernel`]: Gaussian kernel, pooled Gram matrix, kernel-space mean
//!   vectors and covariance operators, PSD square roots.
//! - [`ocsvm`]: the standard kernel one-class SVM (dual QP, bias, decision).
//! - [`uncertainty`]: moment specifications, moment-matched sampling and the
//!   Sampling / Clustering I / Clustering II sample-set builders.
//! - [`drcc`]: the kernelized robust SOCP, its solver, decision function and
//!   KKT / robust-geometry verification.
//! - [`datasets`]: the D1, D2 and D3 simulated datasets.
//! - [`evaluation`]: Acc / PF1 / NF1, holdout selection and NUT-PF1.
//! - [`pipeline`]: method dispatch tying the above together for one
//!   training run.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod datasets;
pub mod drcc;
mod error;
pub mod evaluation;
pub mod kernel;
pub mod ocsvm;
pub mod pipeline;
pub mod qp;
pub mod rng;
pub mod socp;
pub mod uncertainty;

pub use error::{Error, Result};

/// A point in input space.
pub type Point = alloc::vec::Vec<f64>;

/// Binary label; anomaly is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    /// Label from a decision score: `score >= 0` is normal.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Normal
        } else {
            Label::Anomaly
        }
    }

    pub fn is_anomaly(self) -> bool {
        matches!(self, Label::Anomaly)
    }
}

/// Anything that can score a point. Non-negative scores are normal.
pub trait Detector {
    fn score(&self, x: &[f64]) -> Result<f64>;

    fn decide(&self, x: &[f64]) -> Result<(f64, Label)> {
        let s = self.score(x)?;
        Ok((s, Label::from_score(s)))
    }
}
