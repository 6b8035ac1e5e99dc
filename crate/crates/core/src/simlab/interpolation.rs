use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::distribution::{DistKind, ScoreDistribution};
use super::{mean_std, ResultTable};
use crate::data::{sample_indices, Label, RngHandle, ScoreRange};
use crate::error::{Error, Result};
use crate::interp::{interp_sup_error, interpolate, sort_descending, InterpConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpExperimentSpec {
    pub distribution: ScoreDistribution,
    pub n_values: Vec<usize>,
    /// Size `N+` of the positive population being reconstructed.
    pub target_len: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Grid resolution for the analytic series.
    pub grid: usize,
}

impl Default for InterpExperimentSpec {
    fn default() -> Self {
        Self {
            distribution: ScoreDistribution::standard(DistKind::Binormal),
            n_values: vec![8, 16, 32, 64, 128],
            target_len: 3000,
            repeats: 100,
            seed: 0,
            grid: 1 << 16,
        }
    }
}

/// `Φ⁻¹(0.05 + 0.9 x)`: the standard normal quantile on its central 90%.
pub fn normal_central_quantile(x: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(0.05 + 0.9 * x)
}

/// Sup error of interpolating `quantile_fn` through `n + 1` equispaced
/// knots, for each `n`, on a grid of `grid` cells.
pub fn analytic_interp_errors(
    quantile_fn: impl Fn(f64) -> f64 + Copy,
    n_values: &[usize],
    range: ScoreRange,
    grid: usize,
) -> Result<Vec<f64>> {
    let cfg = InterpConfig {
        target_len: grid,
        range,
    };
    n_values
        .iter()
        .map(|&n| interp_sup_error(quantile_fn, n, &cfg))
        .collect()
}

/// Reconstruction error of the positive population from `n` sampled scores.
///
/// Series `sampled`: mean and std over repeats of the sup distance between
/// the sorted population and the interpolant of a size-`n` subsample.
/// Series `analytic`: sup error of interpolating the positive-class quantile
/// function on `[0.05, 0.95]` with `n` intervals (no sampling noise).
pub fn run_interp_experiment(spec: &InterpExperimentSpec) -> Result<ResultTable> {
    spec.distribution.validate()?;
    if spec.repeats < 2 {
        return Err(Error::spec("need at least two repeats"));
    }
    if spec.n_values.is_empty() || spec.grid == 0 {
        return Err(Error::spec("need n values and a positive grid"));
    }
    if let Some(&n) = spec.n_values.iter().find(|&&n| n == 0 || n > spec.target_len) {
        return Err(Error::spec(format!(
            "sample size {n} must lie in 1..={}",
            spec.target_len
        )));
    }
    let root = RngHandle::new(spec.seed, 0);
    let population = spec
        .distribution
        .sample(Label::Positive, spec.target_len, &mut root.fork(0).rng())?;
    let sorted = sort_descending(&population);
    let range = ScoreRange::new(sorted[sorted.len() - 1], sorted[0].max(sorted[sorted.len() - 1] + f64::EPSILON))?;
    let icfg = InterpConfig {
        target_len: spec.target_len,
        range,
    };

    let mut table = ResultTable::new(spec.repeats);
    for (k, &n) in spec.n_values.iter().enumerate() {
        let handle = root.fork(1 + k as u64);
        let errors = (0..spec.repeats as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = handle.stream(r).rng();
                let idx = sample_indices(&mut rng, population.len(), n, "positive")?;
                let sample: Vec<f64> = idx.iter().map(|&i| population[i]).collect();
                let m = interpolate(&sample, &icfg)?;
                Ok(m.iter()
                    .zip(&sorted)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, std) = mean_std(&errors);
        table.push(n as f64, "sampled", mean, std);
    }

    let dist = spec.distribution;
    let q = move |x: f64| {
        dist.quantile(Label::Positive, 0.05 + 0.9 * x)
            .expect("level inside (0, 1)")
    };
    let lo = q(0.0);
    let hi = q(1.0);
    let analytic = analytic_interp_errors(q, &spec.n_values, ScoreRange::new(lo, hi)?, spec.grid)?;
    for (&n, e) in spec.n_values.iter().zip(analytic) {
        table.push(n as f64, "analytic", e, 0.0);
    }
    Ok(table)
}
