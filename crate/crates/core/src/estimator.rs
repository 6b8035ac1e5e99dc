//! Mini-batch estimators of the surrogate AUPRC risk and their gradients
//! with respect to every batch score.
//!
//! The proposed estimator averages, over the batch positives, the link
//! `σ(odds · Â / B̂)` where `Â` is the mean `ell1` against the batch negatives
//! and `B̂` the mean `ell2` against an auxiliary vector `v` that stands in for
//! the scores of all training positives. Because `odds` is the dataset prior
//! rather than the batch sampling rate, the estimate does not drift when the
//! batch over- or under-samples positives.
//!
//! The AP estimator is the same expression with `v` replaced by the batch's
//! own positives and `odds` by the batch class ratio `n- / n+`.

use serde::{Deserialize, Serialize};

use crate::data::check_finite;
use crate::error::{Error, Result};
use crate::surrogate::{link, link_prime, SurrogateParams};

/// Exponential moving average of interpolated positive scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxVector {
    values: Vec<f64>,
    beta: f64,
    step_count: u64,
}

impl AuxVector {
    /// `values` must be finite and non-increasing; `beta ∈ (0, 1]`.
    pub fn new(values: Vec<f64>, beta: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyClass("auxiliary vector is empty"));
        }
        check_finite(&values)?;
        if let Some(i) = values.windows(2).position(|w| w[0] < w[1]) {
            return Err(Error::Monotonicity(i + 1));
        }
        check_beta(beta)?;
        Ok(Self {
            values,
            beta,
            step_count: 0,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn from_update(values: Vec<f64>, beta: f64, step_count: u64) -> Self {
        Self {
            values,
            beta,
            step_count,
        }
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("beta {beta} not in (0, 1]")))
    }
}

/// Estimator value and its partial derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorGradients {
    pub value: f64,
    /// ∂f̂/∂s⁺ᵢ, one per batch positive.
    pub d_pos: Vec<f64>,
    /// ∂f̂/∂s⁻ⱼ, one per batch negative.
    pub d_neg: Vec<f64>,
}

fn validate(pos: &[f64], neg: &[f64], v: &[f64]) -> Result<()> {
    if pos.is_empty() {
        return Err(Error::EmptyClass("batch has no positive scores"));
    }
    if neg.is_empty() {
        return Err(Error::EmptyClass("batch has no negative scores"));
    }
    if v.is_empty() {
        return Err(Error::EmptyClass("auxiliary vector is empty"));
    }
    check_finite(pos)?;
    check_finite(neg)?;
    check_finite(v)
}

/// Mean `ell2(s - v_k)` over `v` for each score `s` (unfloored).
pub fn tpr_estimates(pos: &[f64], v: &[f64], params: &SurrogateParams) -> Vec<f64> {
    let inv = 1.0 / v.len() as f64;
    pos.iter()
        .map(|&s| v.iter().map(|&vk| params.l2(s - vk)).sum::<f64>() * inv)
        .collect()
}

fn value_impl(pos: &[f64], neg: &[f64], tpr: &[f64], odds: f64, params: &SurrogateParams) -> f64 {
    let inv_neg = 1.0 / neg.len() as f64;
    let total: f64 = pos
        .iter()
        .zip(tpr)
        .map(|(&s, &b)| {
            let a = neg.iter().map(|&t| params.l1(s - t)).sum::<f64>() * inv_neg;
            link(odds * a / b.max(params.denom_floor))
        })
        .sum();
    total / pos.len() as f64
}

/// Batch estimator given precomputed per-positive TPR estimates (from
/// [`tpr_estimates`]). Used when `v` is fixed across many batches.
pub fn batch_estimator_with_tpr(
    pos: &[f64],
    neg: &[f64],
    tpr: &[f64],
    params: &SurrogateParams,
) -> Result<f64> {
    if tpr.len() != pos.len() {
        return Err(Error::Shape(format!(
            "{} TPR estimates for {} positives",
            tpr.len(),
            pos.len()
        )));
    }
    validate(pos, neg, tpr)?;
    Ok(value_impl(pos, neg, tpr, params.odds(), params))
}

/// Proposed batch estimator with auxiliary vector `v`.
pub fn batch_estimator(pos: &[f64], neg: &[f64], v: &[f64], params: &SurrogateParams) -> Result<f64> {
    validate(pos, neg, v)?;
    let tpr = tpr_estimates(pos, v, params);
    Ok(value_impl(pos, neg, &tpr, params.odds(), params))
}

/// Gradient of [`batch_estimator`] with `v` held constant.
pub fn batch_estimator_grad(
    pos: &[f64],
    neg: &[f64],
    v: &[f64],
    params: &SurrogateParams,
) -> Result<EstimatorGradients> {
    validate(pos, neg, v)?;
    Ok(grad_impl(pos, neg, v, params.odds(), params, None))
}

/// Gradient of [`batch_estimator`] that additionally returns `∂f̂/∂v`.
pub fn batch_estimator_grad_with_aux(
    pos: &[f64],
    neg: &[f64],
    v: &[f64],
    params: &SurrogateParams,
) -> Result<(EstimatorGradients, Vec<f64>)> {
    validate(pos, neg, v)?;
    let mut d_v = vec![0.0; v.len()];
    let g = grad_impl(pos, neg, v, params.odds(), params, Some(&mut d_v));
    Ok((g, d_v))
}

fn grad_impl(
    pos: &[f64],
    neg: &[f64],
    v: &[f64],
    odds: f64,
    params: &SurrogateParams,
    mut d_v: Option<&mut Vec<f64>>,
) -> EstimatorGradients {
    let inv_pos = 1.0 / pos.len() as f64;
    let inv_neg = 1.0 / neg.len() as f64;
    let inv_v = 1.0 / v.len() as f64;
    let mut value = 0.0;
    let mut d_pos = vec![0.0; pos.len()];
    let mut d_neg = vec![0.0; neg.len()];

    for (i, &s) in pos.iter().enumerate() {
        let (mut a, mut a_prime) = (0.0, 0.0);
        for &t in neg {
            a += params.l1(s - t);
            a_prime += params.l1_prime(s - t);
        }
        a *= inv_neg;
        a_prime *= inv_neg;

        let (mut b, mut b_prime) = (0.0, 0.0);
        for &vk in v {
            b += params.l2(s - vk);
            b_prime += params.l2_prime(s - vk);
        }
        b *= inv_v;
        b_prime *= inv_v;
        let floored = b < params.denom_floor;
        if floored {
            b = params.denom_floor;
            b_prime = 0.0;
        }

        let u = odds * a / b;
        value += link(u);
        // w = ∂f̂/∂u_i
        let w = inv_pos * link_prime(u);
        d_pos[i] = w * odds * (a_prime * b - a * b_prime) / (b * b);
        if a_prime != 0.0 || a != 0.0 {
            let scale = w * odds * inv_neg / b;
            for (dj, &t) in d_neg.iter_mut().zip(neg) {
                *dj -= scale * params.l1_prime(s - t);
            }
        }
        if let Some(d_v) = d_v.as_deref_mut() {
            if !floored && a != 0.0 {
                // ∂u/∂v_k = -odds · a / b² · ∂b/∂v_k, ∂b/∂v_k = -ell2'(s - v_k) / |v|
                let scale = w * odds * a / (b * b) * inv_v;
                for (dk, &vk) in d_v.iter_mut().zip(v) {
                    *dk += scale * params.l2_prime(s - vk);
                }
            }
        }
    }
    EstimatorGradients {
        value: value * inv_pos,
        d_pos,
        d_neg,
    }
}

fn batch_odds(pos: &[f64], neg: &[f64]) -> f64 {
    neg.len() as f64 / pos.len() as f64
}

/// AP estimator: the batch's own positives replace `v` and the batch class
/// ratio replaces the dataset prior.
pub fn ap_estimator(pos: &[f64], neg: &[f64], params: &SurrogateParams) -> Result<f64> {
    validate(pos, neg, pos)?;
    let tpr = tpr_estimates(pos, pos, params);
    Ok(value_impl(pos, neg, &tpr, batch_odds(pos, neg), params))
}

/// Gradient of [`ap_estimator`]; positives receive both the threshold and
/// the denominator-member contributions.
pub fn ap_estimator_grad(
    pos: &[f64],
    neg: &[f64],
    params: &SurrogateParams,
) -> Result<EstimatorGradients> {
    validate(pos, neg, pos)?;
    let mut d_member = vec![0.0; pos.len()];
    let mut g = grad_impl(pos, neg, pos, batch_odds(pos, neg), params, Some(&mut d_member));
    for (d, m) in g.d_pos.iter_mut().zip(d_member) {
        *d += m;
    }
    Ok(g)
}
