//! Differentiable scorers with a hand-written reverse pass.
//!
//! Raw outputs `z` are squashed into the score range with
//! `mid + half · tanh(z / half)`, which is `B · tanh(z / B)` for a symmetric
//! range `[-B, B]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{check_finite, ScoreRange};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `z = w · x`
    Linear,
    /// `z = w2 · tanh(W1 x + b1) + b2`
    Mlp1,
}

/// A linear or one-hidden-layer scorer. Weights are stored flat:
/// linear is `w[0..d]`; mlp1 is `W1` (row-major, `h × d`), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    pub kind: ModelKind,
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dim: usize,
    pub range: ScoreRange,
    pub weights: Vec<f64>,
}

impl ScorerModel {
    pub fn num_params(kind: ModelKind, input_dim: usize, hidden_dim: usize) -> usize {
        match kind {
            ModelKind::Linear => input_dim,
            ModelKind::Mlp1 => hidden_dim * input_dim + 2 * hidden_dim + 1,
        }
    }

    pub fn from_weights(
        kind: ModelKind,
        input_dim: usize,
        hidden_dim: usize,
        range: ScoreRange,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let model = Self {
            kind,
            input_dim,
            hidden_dim,
            range,
            weights,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Shape("model input dimension is zero".into()));
        }
        if self.kind == ModelKind::Mlp1 && self.hidden_dim == 0 {
            return Err(Error::Shape("mlp1 needs a hidden layer".into()));
        }
        let expected = Self::num_params(self.kind, self.input_dim, self.hidden_dim);
        if self.weights.len() != expected {
            return Err(Error::Shape(format!(
                "{} weights for a model with {expected} parameters",
                self.weights.len()
            )));
        }
        ScoreRange::new(self.range.lo, self.range.hi)?;
        check_finite(&self.weights)
    }

    /// Gaussian initialization with standard deviation `scale / sqrt(fan_in)`.
    pub fn random<R: Rng + ?Sized>(
        kind: ModelKind,
        input_dim: usize,
        hidden_dim: usize,
        range: ScoreRange,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let count = Self::num_params(kind, input_dim, hidden_dim);
        let normal = |fan_in: usize| {
            Normal::new(0.0, scale / (fan_in.max(1) as f64).sqrt())
                .map_err(|e| Error::spec(e.to_string()))
        };
        let weights = match kind {
            ModelKind::Linear => {
                let n = normal(input_dim)?;
                (0..count).map(|_| n.sample(rng)).collect()
            }
            ModelKind::Mlp1 => {
                let first = normal(input_dim)?;
                let second = normal(hidden_dim)?;
                let mut w: Vec<f64> = (0..hidden_dim * input_dim).map(|_| first.sample(rng)).collect();
                w.extend(std::iter::repeat(0.0).take(hidden_dim));
                w.extend((0..hidden_dim).map(|_| second.sample(rng)));
                w.push(0.0);
                w
            }
        };
        Self::from_weights(kind, input_dim, hidden_dim, range, weights)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.input_dim {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "input of dimension {} for a model of dimension {}",
                x.len(),
                self.input_dim
            )))
        }
    }

    #[inline]
    fn squash(&self, z: f64) -> f64 {
        let half = self.range.half_width();
        // tanh can round to ±1 exactly; the clamp keeps mid ± half inside.
        self.range.clamp(self.range.mid() + half * (z / half).tanh())
    }

    #[inline]
    fn squash_prime(&self, z: f64) -> f64 {
        let t = (z / self.range.half_width()).tanh();
        1.0 - t * t
    }

    // Raw output and, for mlp1, hidden activations.
    fn raw(&self, x: &[f64], hidden: &mut Vec<f64>) -> f64 {
        let d = self.input_dim;
        match self.kind {
            ModelKind::Linear => dot(&self.weights, x),
            ModelKind::Mlp1 => {
                let h = self.hidden_dim;
                let (w1, rest) = self.weights.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                hidden.clear();
                hidden.extend((0..h).map(|k| (dot(&w1[k * d..(k + 1) * d], x) + b1[k]).tanh()));
                dot(w2, hidden) + b2[0]
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.squash(self.raw(x, &mut Vec::new())))
    }

    pub fn forward_batch<'a>(&self, xs: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
        let mut hidden = Vec::with_capacity(self.hidden_dim);
        xs.into_iter()
            .map(|x| {
                self.check_input(x)?;
                Ok(self.squash(self.raw(x, &mut hidden)))
            })
            .collect()
    }

    /// `Σ_i d_scores[i] · ∂score(x_i)/∂w`.
    pub fn backward_scores<'a>(
        &self,
        xs: impl IntoIterator<Item = &'a [f64]>,
        d_scores: &[f64],
    ) -> Result<Vec<f64>> {
        let xs: Vec<&[f64]> = xs.into_iter().collect();
        if xs.len() != d_scores.len() {
            return Err(Error::Shape(format!(
                "{} score gradients for {} inputs",
                d_scores.len(),
                xs.len()
            )));
        }
        let mut grad = vec![0.0; self.weights.len()];
        let mut hidden = Vec::with_capacity(self.hidden_dim);
        for (x, &ds) in xs.into_iter().zip(d_scores) {
            self.check_input(x)?;
            if ds == 0.0 {
                continue;
            }
            let z = self.raw(x, &mut hidden);
            let dz = ds * self.squash_prime(z);
            self.accumulate(x, &hidden, dz, &mut grad);
        }
        Ok(grad)
    }

    fn accumulate(&self, x: &[f64], hidden: &[f64], dz: f64, grad: &mut [f64]) {
        let d = self.input_dim;
        match self.kind {
            ModelKind::Linear => {
                for (g, &xi) in grad.iter_mut().zip(x) {
                    *g += dz * xi;
                }
            }
            ModelKind::Mlp1 => {
                let h = self.hidden_dim;
                let w2 = &self.weights[h * d + h..h * d + 2 * h];
                let (g_w1, rest) = grad.split_at_mut(h * d);
                let (g_b1, rest) = rest.split_at_mut(h);
                let (g_w2, g_b2) = rest.split_at_mut(h);
                g_b2[0] += dz;
                for k in 0..h {
                    g_w2[k] += dz * hidden[k];
                    let da = dz * w2[k] * (1.0 - hidden[k] * hidden[k]);
                    g_b1[k] += da;
                    for (g, &xi) in g_w1[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *g += da * xi;
                    }
                }
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
