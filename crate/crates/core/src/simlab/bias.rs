use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distribution::{draw_population, DistKind, ScoreDistribution};
use super::{mean_std, ResultTable};
use crate::data::{sample_indices, RngHandle, ScoreRange, ScoreSet};
use crate::error::{Error, Result};
use crate::estimator::{ap_estimator, batch_estimator_with_tpr, check_beta, tpr_estimates};
use crate::interp::{interpolate, sort_descending, InterpConfig};
use crate::metrics::surrogate_risk;
use crate::surrogate::{SurrogateParams, DEFAULT_DENOM_FLOOR};

/// Co-evolves `v` with the moving average instead of fixing it at the
/// population scores: `v` starts at the first batch's interpolant and takes
/// `steps - 1` further updates before the estimate is taken on a fresh batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledEma {
    pub beta: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasExperimentSpec {
    pub distribution: ScoreDistribution,
    pub population_size: usize,
    pub prior_pi: f64,
    pub sample_rate_pi0: f64,
    /// Total batch sizes `n = n+ + n-`, with `n+ = round(π0 · n)`.
    pub batch_sizes: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub tau1: f64,
    pub tau2: f64,
    pub denom_floor: f64,
    pub coupled: Option<CoupledEma>,
}

impl Default for BiasExperimentSpec {
    fn default() -> Self {
        Self {
            distribution: ScoreDistribution::standard(DistKind::Binormal),
            population_size: 100_000,
            prior_pi: 0.1,
            sample_rate_pi0: 0.1,
            batch_sizes: vec![64, 128, 256, 512, 1024],
            repeats: 500,
            seed: 0,
            tau1: 1.0,
            tau2: 0.1,
            denom_floor: DEFAULT_DENOM_FLOOR,
            coupled: None,
        }
    }
}

impl BiasExperimentSpec {
    /// `(n+, n-)` for a total batch size.
    pub fn split(&self, n: usize) -> (usize, usize) {
        let n_pos = (self.sample_rate_pi0 * n as f64).round() as usize;
        (n_pos, n.saturating_sub(n_pos))
    }

    fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        if self.repeats < 2 {
            return Err(Error::spec("need at least two repeats"));
        }
        if !(self.sample_rate_pi0 > 0.0 && self.sample_rate_pi0 < 1.0) {
            return Err(Error::spec(format!("sampling rate {} not in (0, 1)", self.sample_rate_pi0)));
        }
        if self.batch_sizes.is_empty() {
            return Err(Error::spec("no batch sizes"));
        }
        if let Some(c) = self.coupled {
            check_beta(c.beta)?;
            if c.steps == 0 {
                return Err(Error::spec("coupled mode needs at least one step"));
            }
        }
        Ok(())
    }
}

/// A drawn population with everything the repeats share: the surrogate
/// parameters at the realised prior, the full-set reference risk and the
/// per-positive TPR estimates against the full positive set.
#[derive(Debug, Clone)]
pub struct BiasPopulation {
    pub scores: ScoreSet,
    pub params: SurrogateParams,
    pub reference: f64,
    pub tpr: Vec<f64>,
    range: ScoreRange,
}

impl BiasPopulation {
    pub fn draw(spec: &BiasExperimentSpec) -> Result<Self> {
        spec.distribution.validate()?;
        let root = RngHandle::new(spec.seed, 0);
        let scores = draw_population(
            &spec.distribution,
            spec.population_size,
            spec.prior_pi,
            &mut root.fork(0).rng(),
        )?;
        let params = SurrogateParams::with_floor(spec.tau1, spec.tau2, scores.prior(), spec.denom_floor)?;
        let reference = surrogate_risk(&scores, &params)?;
        // v is the full positive set, so its interpolant is the sorted set.
        let v = sort_descending(&scores.pos);
        let tpr = scores
            .pos
            .par_chunks(256)
            .map(|chunk| tpr_estimates(chunk, &v, &params))
            .collect::<Vec<_>>()
            .concat();
        let lo = scores.pos.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = ScoreRange::new(lo, hi.max(lo + f64::EPSILON))?;
        Ok(Self {
            scores,
            params,
            reference,
            tpr,
            range,
        })
    }
}

/// Draws the population and runs [`BiasPopulation`]-based repeats.
pub fn run_bias_experiment(spec: &BiasExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let population = BiasPopulation::draw(spec)?;
    run_on_population(spec, &population)
}

impl BiasPopulation {
    /// Runs the repeats of `spec` against this population; the
    /// distribution, size and prior fields of `spec` are ignored.
    pub fn run(&self, spec: &BiasExperimentSpec) -> Result<ResultTable> {
        spec.validate()?;
        run_on_population(spec, self)
    }
}

struct Sample {
    proposed: f64,
    ap: f64,
}

fn run_on_population(spec: &BiasExperimentSpec, pop: &BiasPopulation) -> Result<ResultTable> {
    let n_pos_total = pop.scores.pos.len();
    let n_neg_total = pop.scores.neg.len();
    for &n in &spec.batch_sizes {
        let (np, nn) = spec.split(n);
        if np == 0 || nn == 0 || np > n_pos_total || nn > n_neg_total {
            return Err(Error::spec(format!(
                "batch size {n} at sampling rate {} gives {np} positives and {nn} negatives \
                 from a population of {n_pos_total} and {n_neg_total}",
                spec.sample_rate_pi0
            )));
        }
    }
    let root = RngHandle::new(spec.seed, 0);
    let mut table = ResultTable::new(spec.repeats);
    let mut per_size = Vec::with_capacity(spec.batch_sizes.len());
    for (k, &n) in spec.batch_sizes.iter().enumerate() {
        let (np, nn) = spec.split(n);
        let handle = root.fork(1 + k as u64);
        let samples = (0..spec.repeats as u64)
            .into_par_iter()
            .map(|r| one_repeat(spec, pop, np, nn, handle.stream(r)))
            .collect::<Result<Vec<Sample>>>()?;
        per_size.push(samples);
    }
    for (name, pick) in [
        ("proposed", (|s: &Sample| s.proposed) as fn(&Sample) -> f64),
        ("ap", |s: &Sample| s.ap),
    ] {
        for (&n, samples) in spec.batch_sizes.iter().zip(&per_size) {
            let errors: Vec<f64> = samples.iter().map(|s| pick(s) - pop.reference).collect();
            let (mean, std) = mean_std(&errors);
            table.push(n as f64, name, mean, std);
        }
    }
    table.push(0.0, "reference", pop.reference, 0.0);
    table.group();
    Ok(table)
}

fn one_repeat(
    spec: &BiasExperimentSpec,
    pop: &BiasPopulation,
    n_pos: usize,
    n_neg: usize,
    handle: RngHandle,
) -> Result<Sample> {
    let mut rng = handle.rng();
    let n_pos_total = pop.scores.pos.len();
    let n_neg_total = pop.scores.neg.len();
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
        let pi = sample_indices(rng, n_pos_total, n_pos, "positive")?;
        let ni = sample_indices(rng, n_neg_total, n_neg, "negative")?;
        let pos = pi.iter().map(|&i| pop.scores.pos[i]).collect();
        let neg = ni.iter().map(|&i| pop.scores.neg[i]).collect();
        Ok((pi, pos, neg))
    };
    let (pos, neg, tpr) = match spec.coupled {
        None => {
            let (idx, pos, neg) = draw(&mut rng)?;
            let tpr = idx.iter().map(|&i| pop.tpr[i]).collect();
            (pos, neg, tpr)
        }
        Some(c) => {
            let icfg = InterpConfig {
                target_len: n_pos_total,
                range: pop.range,
            };
            let mut v: Vec<f64> = Vec::new();
            for step in 0..c.steps {
                let (_, pos, _) = draw(&mut rng)?;
                let phi = interpolate(&pos, &icfg)?;
                if step == 0 {
                    v = phi;
                } else {
                    for (a, b) in v.iter_mut().zip(phi) {
                        *a = (1.0 - c.beta) * *a + c.beta * b;
                    }
                }
            }
            let (_, pos, neg) = draw(&mut rng)?;
            let tpr = tpr_estimates(&pos, &v, &pop.params);
            (pos, neg, tpr)
        }
    };
    Ok(Sample {
        proposed: batch_estimator_with_tpr(&pos, &neg, &tpr, &pop.params)?,
        ap: ap_estimator(&pos, &neg, &pop.params)?,
    })
}
