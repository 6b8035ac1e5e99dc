//! Stochastic training loop with an auxiliary moving-average vector.
//!
//! Each iteration samples a batch, scores it, resamples the positive scores
//! to length `N+`, folds them into the auxiliary vector `v`, and takes an SGD
//! step on the batch estimator plus the semi-variance regularizer.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{sample_batch, Dataset, RngHandle, ScoreSet};
use crate::error::{Error, Result};
use crate::estimator::{
    batch_estimator_grad, batch_estimator_grad_with_aux, check_beta, AuxVector, EstimatorGradients,
};
use crate::interp::{interpolate, interpolate_jacobian, InterpConfig};
use crate::metrics::empirical_auprc;
use crate::model::ScorerModel;
use crate::surrogate::{SurrogateParams, DEFAULT_DENOM_FLOOR};

/// Learning-rate schedule `η_t`, `t >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    /// `η`
    Constant(f64),
    /// `C / t`
    Inverse(f64),
    /// `(2t + 1) / (μ (t + 1)²)`
    Pl(f64),
}

impl LrSchedule {
    fn validate(&self) -> Result<()> {
        let (Self::Constant(x) | Self::Inverse(x) | Self::Pl(x)) = *self;
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Error::spec(format!("learning-rate parameter {x} must be positive")))
        }
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    /// Parses `constant:0.1`, `inverse:2` or `pl:1`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::spec(format!("schedule {s:?} is not kind:value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::spec(format!("schedule value {value:?} is not a number")))?;
        let schedule = match kind.trim() {
            "constant" => Self::Constant(value),
            "inverse" => Self::Inverse(value),
            "pl" => Self::Pl(value),
            other => {
                return Err(Error::spec(format!(
                    "unknown schedule {other:?} (expected constant, inverse or pl)"
                )))
            }
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

pub fn lr_at(schedule: LrSchedule, t: usize) -> Result<f64> {
    if t < 1 {
        return Err(Error::domain("learning-rate step index starts at 1"));
    }
    schedule.validate()?;
    let t = t as f64;
    Ok(match schedule {
        LrSchedule::Constant(eta) => eta,
        LrSchedule::Inverse(c) => c / t,
        LrSchedule::Pl(mu) => (2.0 * t + 1.0) / (mu * (t + 1.0) * (t + 1.0)),
    })
}

/// How the estimator gradient treats the auxiliary vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxGradient {
    /// `v` is a constant.
    Stop,
    /// Backpropagate through the fresh `β · φ(batch)` term of `v`.
    ThroughEcho,
    /// Treat `v` as an estimate of the full positive score vector and chain
    /// its gradient through the current batch interpolant with unit weight.
    #[default]
    Compositional,
}

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    pub beta: f64,
    pub lr_schedule: LrSchedule,
    pub weight_decay: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub tau1: f64,
    pub tau2: f64,
    pub denom_floor: f64,
    /// Prior used in the estimator; the training-set prior when `None`.
    pub prior: Option<f64>,
    /// Validation AUPRC every this many iterations (0 disables).
    pub eval_every: usize,
    pub aux_gradient: AuxGradient,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_pos: 8,
            n_neg: 32,
            beta: 0.001,
            lr_schedule: LrSchedule::Constant(0.05),
            weight_decay: 4e-4,
            lambda1: 0.0,
            lambda2: 0.0,
            max_iters: 2000,
            seed: 0,
            tau1: 2.0,
            tau2: 0.1,
            denom_floor: DEFAULT_DENOM_FLOOR,
            prior: None,
            eval_every: 100,
            aux_gradient: AuxGradient::Compositional,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::spec("max_iters must be at least 1"));
        }
        if self.n_pos == 0 || self.n_neg == 0 {
            return Err(Error::spec("batch sizes must be positive"));
        }
        check_beta(self.beta)?;
        self.lr_schedule.validate()?;
        for (name, x) in [
            ("weight_decay", self.weight_decay),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::spec(format!("{name} = {x} must be non-negative")));
            }
        }
        SurrogateParams::with_floor(self.tau1, self.tau2, self.prior.unwrap_or(0.5), self.denom_floor)?;
        Ok(())
    }

    pub fn surrogate(&self, dataset: &Dataset) -> Result<SurrogateParams> {
        SurrogateParams::with_floor(
            self.tau1,
            self.tau2,
            self.prior.unwrap_or_else(|| dataset.prior()),
            self.denom_floor,
        )
    }
}

/// One iteration of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub loss: f64,
    pub reg: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub val_auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loss,reg,grad_norm,lr,val_auprc\n");
        for r in &self.records {
            let _ = write!(out, "{},{},{},{},{},", r.iter, r.loss, r.reg, r.grad_norm, r.lr);
            if let Some(v) = r.val_auprc {
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Last recorded validation AUPRC.
    pub fn final_val_auprc(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.val_auprc)
    }
}

/// `v ← (1 - β) v + β · interpolated`.
pub fn ema_update(v: &AuxVector, interpolated: &[f64], beta_t: f64) -> Result<AuxVector> {
    check_beta(beta_t)?;
    if interpolated.len() != v.len() {
        return Err(Error::Shape(format!(
            "interpolated vector of length {} for an auxiliary vector of length {}",
            interpolated.len(),
            v.len()
        )));
    }
    let values = v
        .values()
        .iter()
        .zip(interpolated)
        .map(|(&a, &b)| (1.0 - beta_t) * a + beta_t * b)
        .collect();
    Ok(AuxVector::from_update(values, v.beta(), v.step_count() + 1))
}

/// Semi-variance penalty and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiVariance {
    pub value: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

/// `λ1/n+ Σ_{s<μ+} (s-μ+)² + λ2/n- Σ_{s>μ-} (s-μ-)²`, penalizing positives
/// below their batch mean and negatives above theirs. Gradients include the
/// dependence of each mean on every score.
pub fn semi_variance(pos: &[f64], neg: &[f64], lambda1: f64, lambda2: f64) -> Result<SemiVariance> {
    if pos.is_empty() {
        return Err(Error::EmptyClass("no positive scores"));
    }
    if neg.is_empty() {
        return Err(Error::EmptyClass("no negative scores"));
    }
    let (vp, d_pos) = one_side(pos, lambda1, |s, mu| s < mu);
    let (vn, d_neg) = one_side(neg, lambda2, |s, mu| s > mu);
    Ok(SemiVariance {
        value: vp + vn,
        d_pos,
        d_neg,
    })
}

fn one_side(scores: &[f64], lambda: f64, active: impl Fn(f64, f64) -> bool) -> (f64, Vec<f64>) {
    let n = scores.len() as f64;
    if lambda == 0.0 {
        return (0.0, vec![0.0; scores.len()]);
    }
    let mu = scores.iter().sum::<f64>() / n;
    let mut value = 0.0;
    let mut dev_sum = 0.0;
    let mut grad: Vec<f64> = scores
        .iter()
        .map(|&s| {
            if active(s, mu) {
                let d = s - mu;
                value += d * d;
                dev_sum += d;
                2.0 * lambda / n * d
            } else {
                0.0
            }
        })
        .collect();
    // ∂μ/∂s_k = 1/n for every k.
    let shared = 2.0 * lambda / n * dev_sum / n;
    for g in &mut grad {
        *g -= shared;
    }
    (lambda / n * value, grad)
}

/// Loss and weight gradient of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchObjective {
    pub estimator: f64,
    pub reg: f64,
    /// Gradient of `estimator + reg` (weight decay excluded).
    pub grad: Vec<f64>,
}

/// Evaluates the batch objective and its gradient for fixed `v`.
pub fn batch_objective(
    model: &ScorerModel,
    pos_x: &[&[f64]],
    neg_x: &[&[f64]],
    v: &[f64],
    params: &SurrogateParams,
    lambda1: f64,
    lambda2: f64,
) -> Result<BatchObjective> {
    let s_pos = model.forward_batch(pos_x.iter().copied())?;
    let s_neg = model.forward_batch(neg_x.iter().copied())?;
    let est = batch_estimator_grad(&s_pos, &s_neg, v, params)?;
    finish_objective(model, pos_x, neg_x, est, &s_pos, &s_neg, lambda1, lambda2)
}

/// The objective of a first compositional step: `v` is the interpolant of
/// the batch's own positive scores, and the gradient includes the path
/// through `v`.
#[allow(clippy::too_many_arguments)]
pub fn interpolated_objective(
    model: &ScorerModel,
    pos_x: &[&[f64]],
    neg_x: &[&[f64]],
    icfg: &InterpConfig,
    params: &SurrogateParams,
    lambda1: f64,
    lambda2: f64,
) -> Result<BatchObjective> {
    let s_pos = model.forward_batch(pos_x.iter().copied())?;
    let s_neg = model.forward_batch(neg_x.iter().copied())?;
    let v = interpolate(&s_pos, icfg)?;
    let (mut est, d_v) = batch_estimator_grad_with_aux(&s_pos, &s_neg, &v, params)?;
    chain_through_interpolant(&mut est.d_pos, &s_pos, icfg, &d_v, 1.0)?;
    finish_objective(model, pos_x, neg_x, est, &s_pos, &s_neg, lambda1, lambda2)
}

fn chain_through_interpolant(
    d_pos: &mut [f64],
    s_pos: &[f64],
    icfg: &InterpConfig,
    d_v: &[f64],
    weight: f64,
) -> Result<()> {
    for (row, dv) in interpolate_jacobian(s_pos, icfg)?.into_iter().zip(d_v) {
        for (src, dm) in row {
            d_pos[src] += weight * dv * dm;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish_objective(
    model: &ScorerModel,
    pos_x: &[&[f64]],
    neg_x: &[&[f64]],
    est: EstimatorGradients,
    s_pos: &[f64],
    s_neg: &[f64],
    lambda1: f64,
    lambda2: f64,
) -> Result<BatchObjective> {
    let reg = semi_variance(s_pos, s_neg, lambda1, lambda2)?;
    let d_pos: Vec<f64> = est.d_pos.iter().zip(&reg.d_pos).map(|(a, b)| a + b).collect();
    let d_neg: Vec<f64> = est.d_neg.iter().zip(&reg.d_neg).map(|(a, b)| a + b).collect();
    let mut grad = model.backward_scores(pos_x.iter().copied(), &d_pos)?;
    let g_neg = model.backward_scores(neg_x.iter().copied(), &d_neg)?;
    for (g, n) in grad.iter_mut().zip(g_neg) {
        *g += n;
    }
    Ok(BatchObjective {
        estimator: est.value,
        reg: reg.value,
        grad,
    })
}

/// Final state of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub model: ScorerModel,
    pub aux: AuxVector,
    pub trace: TrainTrace,
}

/// Trains on `dataset`, reporting validation AUPRC on the training set.
pub fn train(dataset: &Dataset, model: ScorerModel, cfg: &TrainConfig, rng: RngHandle) -> Result<TrainResult> {
    train_with_validation(dataset, None, model, cfg, rng)
}

fn score_dataset(model: &ScorerModel, ds: &Dataset) -> Result<ScoreSet> {
    Ok(ScoreSet {
        pos: model.forward_batch(ds.positives().iter().map(|r| r.features()))?,
        neg: model.forward_batch(ds.negatives().iter().map(|r| r.features()))?,
    })
}

/// Empirical AUPRC of `model` on `ds` at the dataset's own prior.
pub fn evaluate_auprc(model: &ScorerModel, ds: &Dataset) -> Result<f64> {
    empirical_auprc(&score_dataset(model, ds)?, ds.prior())
}

pub fn train_with_validation(
    dataset: &Dataset,
    validation: Option<&Dataset>,
    mut model: ScorerModel,
    cfg: &TrainConfig,
    rng: RngHandle,
) -> Result<TrainResult> {
    cfg.validate()?;
    model.validate()?;
    if model.input_dim != dataset.dim() {
        return Err(Error::Shape(format!(
            "model expects dimension {}, dataset has {}",
            model.input_dim,
            dataset.dim()
        )));
    }
    if let Some(val) = validation {
        if val.dim() != dataset.dim() {
            return Err(Error::Shape("validation set dimension differs".into()));
        }
    }
    if cfg.beta * cfg.n_pos as f64 > 2.0 {
        log::warn!(
            "beta * n_pos = {} exceeds 2; the moving average will track single batches closely",
            cfg.beta * cfg.n_pos as f64
        );
    }
    let params = cfg.surrogate(dataset)?;
    let icfg = InterpConfig {
        target_len: dataset.num_positives(),
        range: model.range,
    };
    let validation = validation.unwrap_or(dataset);
    let mut rng = rng.rng();
    let mut aux: Option<AuxVector> = None;
    let mut trace = TrainTrace::default();

    for t in 1..=cfg.max_iters {
        let batch = sample_batch(dataset, cfg.n_pos, cfg.n_neg, &mut rng)?;
        let pos_x: Vec<&[f64]> = batch
            .pos_indices
            .iter()
            .map(|&i| dataset.positives()[i].features())
            .collect();
        let neg_x: Vec<&[f64]> = batch
            .neg_indices
            .iter()
            .map(|&i| dataset.negatives()[i].features())
            .collect();
        let s_pos = model.forward_batch(pos_x.iter().copied())?;
        let s_neg = model.forward_batch(neg_x.iter().copied())?;

        let phi = interpolate(&s_pos, &icfg)?;
        // v_1 is the first interpolant, i.e. β_1 = 1.
        let echo_weight = match cfg.aux_gradient {
            AuxGradient::ThroughEcho if aux.is_some() => cfg.beta,
            _ => 1.0,
        };
        let next = match &aux {
            None => AuxVector::new(phi, cfg.beta)?,
            Some(v) => ema_update(v, &phi, cfg.beta)?,
        };
        let v = aux.insert(next);

        let (est, d_echo) = match cfg.aux_gradient {
            AuxGradient::Stop => (batch_estimator_grad(&s_pos, &s_neg, v.values(), &params)?, None),
            AuxGradient::ThroughEcho | AuxGradient::Compositional => {
                let (g, d_v) = batch_estimator_grad_with_aux(&s_pos, &s_neg, v.values(), &params)?;
                (g, Some(d_v))
            }
        };
        let reg = semi_variance(&s_pos, &s_neg, cfg.lambda1, cfg.lambda2)?;
        let mut d_pos: Vec<f64> = est.d_pos.iter().zip(&reg.d_pos).map(|(a, b)| a + b).collect();
        let d_neg: Vec<f64> = est.d_neg.iter().zip(&reg.d_neg).map(|(a, b)| a + b).collect();
        if let Some(d_v) = d_echo {
            chain_through_interpolant(&mut d_pos, &s_pos, &icfg, &d_v, echo_weight)?;
        }

        let mut grad = model.backward_scores(pos_x.iter().copied(), &d_pos)?;
        let g_neg = model.backward_scores(neg_x.iter().copied(), &d_neg)?;
        for ((g, n), w) in grad.iter_mut().zip(g_neg).zip(&model.weights) {
            *g += n + cfg.weight_decay * w;
        }
        let loss = est.value;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !(loss.is_finite() && reg.value.is_finite()) {
            return Err(Error::Divergence { iter: t, what: "loss" });
        }
        if !grad_norm.is_finite() {
            return Err(Error::Divergence { iter: t, what: "gradient norm" });
        }
        let lr = lr_at(cfg.lr_schedule, t)?;
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= lr * g;
        }
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { iter: t, what: "weights" });
        }

        let eval_now = cfg.eval_every > 0 && (t % cfg.eval_every == 0 || t == cfg.max_iters);
        let val_auprc = if eval_now {
            Some(evaluate_auprc(&model, validation)?)
        } else {
            None
        };
        trace.records.push(TraceRecord {
            iter: t,
            loss,
            reg: reg.value,
            grad_norm,
            lr,
            val_auprc,
        });
    }

    Ok(TrainResult {
        model,
        aux: aux.expect("max_iters >= 1"),
        trace,
    })
}
