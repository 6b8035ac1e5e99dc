//! Full-set ranking metrics.
//!
//! Tie convention: a sample whose score equals the threshold counts as
//! retrieved (the 0-1 loss is 1 iff `x <= 0`). The positive that defines a
//! threshold is itself part of the true-positive count.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::ScoreSet;
use crate::error::{Error, Result};
use crate::surrogate::{link, SurrogateParams};

/// One point of a precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall curve with one point per positive, by decreasing threshold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// Right-step area: `Σ (r_k - r_{k-1}) p_k` with `r_0 = 0`.
    pub fn step_area(&self) -> f64 {
        let mut prev = 0.0;
        let mut area = 0.0;
        for p in &self.points {
            area += (p.recall - prev) * p.precision;
            prev = p.recall;
        }
        area
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("recall,precision\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.recall, p.precision);
        }
        out
    }
}

fn check_prior(prior_pi: f64) -> Result<()> {
    if prior_pi > 0.0 && prior_pi < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("prior {prior_pi} not in (0, 1)")))
    }
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

// Number of entries >= c in an ascending slice.
fn count_at_least(sorted_asc: &[f64], c: f64) -> usize {
    sorted_asc.len() - sorted_asc.partition_point(|&s| s < c)
}

// (recall, precision) at threshold c under the given prior.
fn operating_point(pos: &[f64], neg: &[f64], prior_pi: f64, c: f64) -> PrPoint {
    let tpr = count_at_least(pos, c) as f64 / pos.len() as f64;
    let fpr = count_at_least(neg, c) as f64 / neg.len() as f64;
    let tp = prior_pi * tpr;
    PrPoint {
        recall: tpr,
        precision: tp / (tp + (1.0 - prior_pi) * fpr),
    }
}

/// Empirical AUPRC: the mean over positives of the prior-weighted precision
/// at that positive's score.
pub fn empirical_auprc(scores: &ScoreSet, prior_pi: f64) -> Result<f64> {
    Ok(pr_curve(scores, prior_pi)?
        .points
        .iter()
        .map(|p| p.precision)
        .sum::<f64>()
        / scores.pos.len() as f64)
}

/// Precision-recall curve, one point per positive threshold.
pub fn pr_curve(scores: &ScoreSet, prior_pi: f64) -> Result<PrCurve> {
    scores.validate()?;
    check_prior(prior_pi)?;
    let pos = sorted(&scores.pos);
    let neg = sorted(&scores.neg);
    let points = pos
        .iter()
        .rev()
        .map(|&c| operating_point(&pos, &neg, prior_pi, c))
        .collect();
    Ok(PrCurve { points })
}

/// Full-set surrogate AUPRC risk.
///
/// For each positive threshold `c` the false-positive rate is the mean of
/// `ell1(c - s)` over negatives, the true-positive rate the mean of
/// `ell2(c - s)` over all positives (self included), and the loss is
/// `σ(odds · fpr / max(tpr, floor))`.
pub fn surrogate_risk(scores: &ScoreSet, params: &SurrogateParams) -> Result<f64> {
    scores.validate()?;
    params.validate()?;
    let odds = params.odds();
    let n_pos = scores.pos.len() as f64;
    let n_neg = scores.neg.len() as f64;
    let total: f64 = scores
        .pos
        .iter()
        .map(|&c| {
            let fpr = scores.neg.iter().map(|&s| params.l1(c - s)).sum::<f64>() / n_neg;
            let tpr = scores.pos.iter().map(|&s| params.l2(c - s)).sum::<f64>() / n_pos;
            link(odds * fpr / tpr.max(params.denom_floor))
        })
        .sum();
    Ok(total / n_pos)
}

/// Average-precision loss: `σ(Σ_neg ell1 / Σ_pos ell2)` averaged over
/// positives, with no prior correction.
///
/// The floor is applied to the per-positive mean of the denominator, which
/// is the same as flooring the sum at `n+ · floor`.
pub fn ap_loss(scores: &ScoreSet, params: &SurrogateParams) -> Result<f64> {
    scores.validate()?;
    params.validate()?;
    let n_pos = scores.pos.len();
    let floor = n_pos as f64 * params.denom_floor;
    let total: f64 = scores
        .pos
        .iter()
        .map(|&c| {
            let num: f64 = scores.neg.iter().map(|&s| params.l1(c - s)).sum();
            let den: f64 = scores.pos.iter().map(|&s| params.l2(c - s)).sum();
            link(num / den.max(floor))
        })
        .sum();
    Ok(total / n_pos as f64)
}
