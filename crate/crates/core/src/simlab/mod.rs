//! Seeded Monte-Carlo experiments on synthetic score populations.
//!
//! Every experiment derives its random streams from one master seed: repeat
//! `r` of sub-experiment `k` draws from `RngHandle::new(seed, 0).fork(k).stream(r)`.
//! Repeats run on the rayon pool and are reduced in repeat order, so results
//! do not depend on the number of threads.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;

mod bias;
mod distribution;
mod ema;
mod interpolation;
mod stability;

pub use bias::{run_bias_experiment, BiasExperimentSpec, BiasPopulation, CoupledEma};
pub use distribution::{draw_population, BlobGenerator, DistKind, ScoreDistribution};
pub use ema::{run_ema_experiment, EmaExperimentSpec, EmaOutcome, EmaSummary};
pub use interpolation::{
    analytic_interp_errors, normal_central_quantile, run_interp_experiment, InterpExperimentSpec,
};
pub use stability::{perturbation_distance, run_stability_probe, StabilityProbeSpec};

/// One aggregated cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub x: f64,
    pub series: String,
    pub mean: f64,
    pub std: f64,
}

/// Experiment output; rows are grouped by series in insertion order.
///
/// `std` is the spread over repeats. The Monte-Carlo standard error of a
/// mean is `std / sqrt(repeats)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub repeats: usize,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(repeats: usize) -> Self {
        Self {
            repeats,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, x: f64, series: impl Into<String>, mean: f64, std: f64) {
        self.rows.push(ResultRow {
            x,
            series: series.into(),
            mean,
            std,
        });
    }

    pub fn series(&self, name: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.series == name).collect()
    }

    pub fn get(&self, series: &str, x: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.series == series && r.x == x)
    }

    pub fn stderr(&self, row: &ResultRow) -> f64 {
        row.std / (self.repeats.max(1) as f64).sqrt()
    }

    /// Stable sort keeping the first-appearance order of series.
    fn group(&mut self) {
        let mut order: Vec<String> = Vec::new();
        for r in &self.rows {
            if !order.contains(&r.series) {
                order.push(r.series.clone());
            }
        }
        self.rows
            .sort_by_key(|r| order.iter().position(|s| *s == r.series).unwrap_or(usize::MAX));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,series,mean,std\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.x, r.series, r.mean, r.std);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Mean and sample standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
