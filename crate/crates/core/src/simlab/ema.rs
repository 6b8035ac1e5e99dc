use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distribution::{DistKind, ScoreDistribution};
use super::{mean_std, ResultTable};
use crate::data::{sample_indices, Label, RngHandle, ScoreRange};
use crate::error::{Error, Result};
use crate::estimator::check_beta;
use crate::interp::{interpolate, InterpConfig};

/// Moving-average study with a fixed scorer: the positive scores are a fixed
/// population of `pop_size` draws, each step interpolates a batch of
/// `batch_pos` of them, and `v` starts at the lowest population score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmaExperimentSpec {
    pub distribution: ScoreDistribution,
    pub pop_size: usize,
    pub batch_pos: usize,
    pub betas: Vec<f64>,
    pub steps: usize,
    pub repeats: usize,
    /// Independent interpolants used for the reference mean and variance.
    pub reference_draws: usize,
    pub seed: u64,
}

impl Default for EmaExperimentSpec {
    fn default() -> Self {
        Self {
            distribution: ScoreDistribution::standard(DistKind::Binormal),
            pop_size: 200,
            batch_pos: 20,
            betas: vec![0.5, 0.1, 0.01],
            steps: 1000,
            repeats: 1000,
            reference_draws: 20_000,
            seed: 0,
        }
    }
}

/// Per-β results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaSummary {
    pub beta: f64,
    /// `|mean_k E[v_t] - mean_k E[φ]|` for `t = 1..=steps`.
    pub bias: Vec<f64>,
    /// Least-squares slope of `ln bias_t` over the steps where
    /// `(1 - β)^(t-1) >= 0.01`; `None` with fewer than two such steps.
    pub decay_slope: Option<f64>,
    /// Per-entry `Var[v_T] / Var[φ]`.
    pub var_ratio: Vec<f64>,
    /// Stationary ratio `β / (2 - β)`.
    pub var_bound: f64,
}

impl EmaSummary {
    pub fn max_var_ratio(&self) -> f64 {
        self.var_ratio.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaOutcome {
    pub table: ResultTable,
    pub summaries: Vec<EmaSummary>,
}

const CHUNK: usize = 500;

pub fn run_ema_experiment(spec: &EmaExperimentSpec) -> Result<EmaOutcome> {
    spec.distribution.validate()?;
    if spec.repeats < 2 || spec.reference_draws < 2 {
        return Err(Error::spec("need at least two repeats and two reference draws"));
    }
    if spec.steps == 0 || spec.batch_pos == 0 || spec.batch_pos > spec.pop_size {
        return Err(Error::spec(format!(
            "invalid shape: {} steps, batches of {} from {}",
            spec.steps, spec.batch_pos, spec.pop_size
        )));
    }
    spec.betas.iter().try_for_each(|&b| check_beta(b))?;

    let root = RngHandle::new(spec.seed, 0);
    let population = spec
        .distribution
        .sample(Label::Positive, spec.pop_size, &mut root.fork(0).rng())?;
    let lo = population.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = population.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let icfg = InterpConfig {
        target_len: spec.pop_size,
        range: ScoreRange::new(lo, hi.max(lo + f64::EPSILON))?,
    };
    let phi = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<f64>> {
        let idx = sample_indices(rng, population.len(), spec.batch_pos, "positive")?;
        let batch: Vec<f64> = idx.iter().map(|&i| population[i]).collect();
        interpolate(&batch, &icfg)
    };

    // Reference moments of φ, accumulated in fixed chunks for a
    // thread-independent reduction.
    let ref_handle = root.fork(1);
    let chunks = spec.reference_draws.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ref_handle.stream(c as u64).rng();
            let count = CHUNK.min(spec.reference_draws - c * CHUNK);
            let mut sum = vec![0.0; spec.pop_size];
            let mut sq = vec![0.0; spec.pop_size];
            for _ in 0..count {
                for ((s, q), x) in sum.iter_mut().zip(sq.iter_mut()).zip(phi(&mut rng)?) {
                    *s += x;
                    *q += x * x;
                }
            }
            Ok((sum, sq))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = spec.reference_draws as f64;
    let mut ref_mean = vec![0.0; spec.pop_size];
    let mut ref_sq = vec![0.0; spec.pop_size];
    for (sum, sq) in partial {
        for k in 0..spec.pop_size {
            ref_mean[k] += sum[k];
            ref_sq[k] += sq[k];
        }
    }
    let ref_var: Vec<f64> = ref_mean
        .iter()
        .zip(&ref_sq)
        .map(|(&s, &q)| ((q - s * s / m) / (m - 1.0)).max(0.0))
        .collect();
    for s in &mut ref_mean {
        *s /= m;
    }
    let ref_level = ref_mean.iter().sum::<f64>() / spec.pop_size as f64;

    let mut table = ResultTable::new(spec.repeats);
    let mut summaries = Vec::with_capacity(spec.betas.len());
    for (b, &beta) in spec.betas.iter().enumerate() {
        let handle = root.fork(2 + b as u64);
        let runs = (0..spec.repeats as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = handle.stream(r).rng();
                let mut v = vec![lo; spec.pop_size];
                let mut levels = Vec::with_capacity(spec.steps);
                levels.push(lo);
                for _ in 1..spec.steps {
                    for (a, x) in v.iter_mut().zip(phi(&mut rng)?) {
                        *a = (1.0 - beta) * *a + beta * x;
                    }
                    levels.push(v.iter().sum::<f64>() / spec.pop_size as f64);
                }
                Ok((levels, v))
            })
            .collect::<Result<Vec<_>>>()?;

        let series = format!("bias_beta={beta}");
        let mut bias = Vec::with_capacity(spec.steps);
        for t in 0..spec.steps {
            let levels: Vec<f64> = runs.iter().map(|(l, _)| l[t]).collect();
            let (mean, std) = mean_std(&levels);
            let b = (mean - ref_level).abs();
            bias.push(b);
            table.push((t + 1) as f64, series.as_str(), b, std);
        }
        let var_ratio: Vec<f64> = (0..spec.pop_size)
            .map(|k| {
                let xs: Vec<f64> = runs.iter().map(|(_, v)| v[k]).collect();
                let (_, std) = mean_std(&xs);
                std * std / ref_var[k]
            })
            .collect();
        summaries.push(EmaSummary {
            beta,
            decay_slope: decay_slope(&bias, beta),
            bias,
            var_ratio,
            var_bound: beta / (2.0 - beta),
        });
    }
    for s in &summaries {
        table.push(s.beta, "var_ratio_max", s.max_var_ratio(), 0.0);
    }
    for s in &summaries {
        let (mean, std) = mean_std(&s.var_ratio);
        table.push(s.beta, "var_ratio_mean", mean, std);
    }
    for s in &summaries {
        table.push(s.beta, "var_bound", s.var_bound, 0.0);
    }
    for s in &summaries {
        table.push(s.beta, "decay_slope", s.decay_slope.unwrap_or(f64::NAN), 0.0);
    }
    for s in &summaries {
        table.push(s.beta, "decay_expected", (1.0 - s.beta).ln(), 0.0);
    }
    Ok(EmaOutcome { table, summaries })
}

fn decay_slope(bias: &[f64], beta: f64) -> Option<f64> {
    let points: Vec<(f64, f64)> = bias
        .iter()
        .enumerate()
        .take_while(|&(t, _)| (1.0 - beta).powi(t as i32) >= 0.01)
        .filter(|&(_, &b)| b > 0.0)
        .map(|(t, &b)| (t as f64, b.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}
