use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distribution::BlobGenerator;
use super::{mean_std, ResultTable};
use crate::data::{Dataset, Label, LabeledVector, RngHandle, ScoreRange};
use crate::error::{Error, Result};
use crate::model::{ModelKind, ScorerModel};
use crate::trainer::{train, TrainConfig};

/// Leave-one-out probe: for each dataset size, train on a blob dataset and on
/// copies with one example of a class redrawn, with identical seeds, and
/// report the parameter distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityProbeSpec {
    pub sizes: Vec<usize>,
    pub prior_pi: f64,
    pub num_perturbations: usize,
    pub seed: u64,
    /// Validation evaluation is switched off for the probe.
    pub train: TrainConfig,
    pub init_scale: f64,
}

impl Default for StabilityProbeSpec {
    fn default() -> Self {
        Self {
            sizes: vec![500, 1000, 2000, 4000],
            prior_pi: 0.1,
            num_perturbations: 20,
            seed: 0,
            train: TrainConfig::default(),
            init_scale: 0.1,
        }
    }
}

/// `‖w(S) - w(S')‖₂` where `S'` replaces `dataset`'s `index`-th example of
/// `label` by `row`; both runs start from `model` with the same seed.
pub fn perturbation_distance(
    dataset: &Dataset,
    label: Label,
    index: usize,
    row: LabeledVector,
    model: &ScorerModel,
    cfg: &TrainConfig,
) -> Result<f64> {
    let rng = RngHandle::new(cfg.seed, 0);
    let base = train(dataset, model.clone(), cfg, rng)?;
    let perturbed = train(&dataset.with_replaced(label, index, row)?, model.clone(), cfg, rng)?;
    Ok(distance(&base.model.weights, &perturbed.model.weights))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Series `positive`, `negative` and `all`, indexed by dataset size.
pub fn run_stability_probe(spec: &StabilityProbeSpec) -> Result<ResultTable> {
    spec.train.validate()?;
    if spec.num_perturbations < 2 {
        return Err(Error::spec("need at least two perturbations"));
    }
    if spec.sizes.is_empty() {
        return Err(Error::spec("no dataset sizes"));
    }
    let cfg = TrainConfig {
        eval_every: 0,
        ..spec.train.clone()
    };
    let root = RngHandle::new(spec.seed, 0);
    let generator = BlobGenerator::default();
    let model = ScorerModel::random(
        ModelKind::Linear,
        2,
        0,
        ScoreRange::default(),
        spec.init_scale,
        &mut root.fork(0).rng(),
    )?;
    let train_rng = RngHandle::new(cfg.seed, 0);

    let mut table = ResultTable::new(spec.num_perturbations);
    let mut per_class: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for (k, &size) in spec.sizes.iter().enumerate() {
        let dataset = generator.dataset(size, spec.prior_pi, &mut root.fork(1 + k as u64).rng())?;
        let base = train(&dataset, model.clone(), &cfg, train_rng)?.model.weights;
        let handle = root.fork(1000 + k as u64);
        let tasks: Vec<(Label, u64)> = [Label::Positive, Label::Negative]
            .into_iter()
            .flat_map(|l| (0..spec.num_perturbations as u64).map(move |i| (l, i)))
            .collect();
        let dists = tasks
            .par_iter()
            .map(|&(label, i)| {
                let stream = 2 * i + u64::from(label == Label::Negative);
                let mut rng = handle.stream(stream).rng();
                let count = match label {
                    Label::Positive => dataset.num_positives(),
                    Label::Negative => dataset.num_negatives(),
                };
                let index = rng.random_range(0..count);
                let row = generator.point(label, &mut rng);
                let perturbed = dataset.with_replaced(label, index, row)?;
                let w = train(&perturbed, model.clone(), &cfg, train_rng)?.model.weights;
                Ok(distance(&base, &w))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (pos, neg) = dists.split_at(spec.num_perturbations);
        per_class.push((size, pos.to_vec(), neg.to_vec()));
    }
    for (name, pick) in [
        ("positive", 0usize),
        ("negative", 1),
        ("all", 2),
    ] {
        for (size, pos, neg) in &per_class {
            let xs: Vec<f64> = match pick {
                0 => pos.clone(),
                1 => neg.clone(),
                _ => pos.iter().chain(neg).copied().collect(),
            };
            let (mean, std) = mean_std(&xs);
            table.push(*size as f64, name, mean, std);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            max_iters: 100,
            eval_every: 0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn identical_replacement_gives_zero() {
        let mut rng = RngHandle::new(1, 0).rng();
        let ds = BlobGenerator::default().dataset(300, 0.1, &mut rng).unwrap();
        let model = ScorerModel::random(ModelKind::Linear, 2, 0, ScoreRange::default(), 0.1, &mut rng).unwrap();
        let same = ds.positives()[3].clone();
        let d = perturbation_distance(&ds, Label::Positive, 3, same, &model, &quick_cfg()).unwrap();
        assert_eq!(d, 0.0);
        let other = BlobGenerator::default().point(Label::Positive, &mut rng);
        let d = perturbation_distance(&ds, Label::Positive, 3, other, &model, &quick_cfg()).unwrap();
        assert!(d.is_finite() && d > 0.0);
    }

    #[test]
    fn probe_reports_every_class() {
        let spec = StabilityProbeSpec {
            sizes: vec![400, 800],
            num_perturbations: 3,
            train: quick_cfg(),
            ..StabilityProbeSpec::default()
        };
        let t = run_stability_probe(&spec).unwrap();
        for series in ["positive", "negative", "all"] {
            let rows = t.series(series);
            assert_eq!(rows.len(), 2);
            assert!(rows.iter().all(|r| r.mean.is_finite() && r.mean >= 0.0));
        }
    }
}
