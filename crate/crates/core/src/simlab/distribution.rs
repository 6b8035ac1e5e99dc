use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::data::{Dataset, Label, LabeledVector, ScoreSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    /// Parameters are `(mean, std)`.
    Binormal,
    /// Parameters are Beta shapes `(a, b)`.
    Bibeta,
    /// Parameters are `(lo, hi)`.
    OffsetUniform,
}

impl DistKind {
    pub const ALL: [DistKind; 3] = [DistKind::Binormal, DistKind::Bibeta, DistKind::OffsetUniform];

    pub fn name(self) -> &'static str {
        match self {
            DistKind::Binormal => "binormal",
            DistKind::Bibeta => "bibeta",
            DistKind::OffsetUniform => "offset_uniform",
        }
    }
}

impl fmt::Display for DistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = DistKind::ALL.iter().map(|k| k.name()).collect();
                Error::spec(format!("unknown distribution {s:?}; valid kinds: {}", valid.join(", ")))
            })
    }
}

/// A pair of class-conditional score distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub kind: DistKind,
    pub pos_params: (f64, f64),
    pub neg_params: (f64, f64),
}

impl ScoreDistribution {
    /// Standard parameters: N(1,1) vs N(0,1), Beta(5,2) vs Beta(2,5), and
    /// U(0.5,1.5) vs U(0,1).
    pub fn standard(kind: DistKind) -> Self {
        let (pos_params, neg_params) = match kind {
            DistKind::Binormal => ((1.0, 1.0), (0.0, 1.0)),
            DistKind::Bibeta => ((5.0, 2.0), (2.0, 5.0)),
            DistKind::OffsetUniform => ((0.5, 1.5), (0.0, 1.0)),
        };
        Self {
            kind,
            pos_params,
            neg_params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (a, b) in [self.pos_params, self.neg_params] {
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::spec("distribution parameters must be finite"));
            }
            let ok = match self.kind {
                DistKind::Binormal => b > 0.0,
                DistKind::Bibeta => a > 0.0 && b > 0.0,
                DistKind::OffsetUniform => a < b,
            };
            if !ok {
                return Err(Error::spec(format!("invalid {} parameters ({a}, {b})", self.kind)));
            }
        }
        Ok(())
    }

    fn params(&self, label: Label) -> (f64, f64) {
        match label {
            Label::Positive => self.pos_params,
            Label::Negative => self.neg_params,
        }
    }

    /// Quantile function of one class at `q ∈ (0, 1)`.
    pub fn quantile(&self, label: Label, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!("quantile level {q} not in (0, 1)")));
        }
        let (a, b) = self.params(label);
        let map = |e: String| Error::spec(e);
        Ok(match self.kind {
            DistKind::Binormal => Normal::new(a, b).map_err(|e| map(e.to_string()))?.inverse_cdf(q),
            DistKind::Bibeta => Beta::new(a, b).map_err(|e| map(e.to_string()))?.inverse_cdf(q),
            DistKind::OffsetUniform => a + (b - a) * q,
        })
    }

    pub fn mean(&self, label: Label) -> f64 {
        let (a, b) = self.params(label);
        match self.kind {
            DistKind::Binormal => a,
            DistKind::Bibeta => a / (a + b),
            DistKind::OffsetUniform => 0.5 * (a + b),
        }
    }

    pub fn variance(&self, label: Label) -> f64 {
        let (a, b) = self.params(label);
        match self.kind {
            DistKind::Binormal => b * b,
            DistKind::Bibeta => a * b / ((a + b) * (a + b) * (a + b + 1.0)),
            DistKind::OffsetUniform => (b - a) * (b - a) / 12.0,
        }
    }

    /// Draws `count` scores of one class by inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, label: Label, count: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        let (a, b) = self.params(label);
        match self.kind {
            DistKind::Binormal => {
                let d = Normal::new(a, b).map_err(|e| Error::spec(e.to_string()))?;
                Ok((0..count).map(|_| d.inverse_cdf(open_unit(rng))).collect())
            }
            DistKind::Bibeta => {
                let d = Beta::new(a, b).map_err(|e| Error::spec(e.to_string()))?;
                Ok((0..count).map(|_| d.inverse_cdf(open_unit(rng))).collect())
            }
            DistKind::OffsetUniform => Ok((0..count).map(|_| a + (b - a) * open_unit(rng)).collect()),
        }
    }
}

/// Uniform on the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

fn class_sizes(size: usize, prior_pi: f64) -> Result<(usize, usize)> {
    if size < 2 {
        return Err(Error::spec(format!("population size {size} is below 2")));
    }
    if !(prior_pi > 0.0 && prior_pi < 1.0) {
        return Err(Error::spec(format!("prior {prior_pi} not in (0, 1)")));
    }
    let n_pos = (prior_pi * size as f64).round() as usize;
    if n_pos == 0 || n_pos == size {
        return Err(Error::spec(format!(
            "prior {prior_pi} leaves a class empty in a population of {size}"
        )));
    }
    Ok((n_pos, size - n_pos))
}

/// Draws `round(π · size)` positive and the remaining negative scores.
pub fn draw_population<R: Rng + ?Sized>(
    dist: &ScoreDistribution,
    size: usize,
    prior_pi: f64,
    rng: &mut R,
) -> Result<ScoreSet> {
    let (n_pos, n_neg) = class_sizes(size, prior_pi)?;
    let pos = dist.sample(Label::Positive, n_pos, rng)?;
    let neg = dist.sample(Label::Negative, n_neg, rng)?;
    ScoreSet::new(pos, neg)
}

/// Two unit-covariance Gaussian blobs in the plane, positives centred at
/// (1, 1) and negatives at (-1, -1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobGenerator {
    pub pos_mean: [f64; 2],
    pub neg_mean: [f64; 2],
}

impl Default for BlobGenerator {
    fn default() -> Self {
        Self {
            pos_mean: [1.0, 1.0],
            neg_mean: [-1.0, -1.0],
        }
    }
}

impl BlobGenerator {
    pub fn point<R: Rng + ?Sized>(&self, label: Label, rng: &mut R) -> LabeledVector {
        let mean = match label {
            Label::Positive => self.pos_mean,
            Label::Negative => self.neg_mean,
        };
        let features = mean
            .iter()
            .map(|&m| m + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        LabeledVector::new(features, label).expect("finite gaussian draw")
    }

    /// `round(π · size)` positives followed by negatives.
    pub fn dataset<R: Rng + ?Sized>(&self, size: usize, prior_pi: f64, rng: &mut R) -> Result<Dataset> {
        let (n_pos, n_neg) = class_sizes(size, prior_pi)?;
        let mut rows: Vec<LabeledVector> = (0..n_pos).map(|_| self.point(Label::Positive, rng)).collect();
        rows.extend((0..n_neg).map(|_| self.point(Label::Negative, rng)));
        Dataset::from_rows(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngHandle;

    #[test]
    fn population_sizes() {
        let mut rng = RngHandle::new(1, 0).rng();
        let dist = ScoreDistribution::standard(DistKind::Binormal);
        let pop = draw_population(&dist, 100_000, 0.1, &mut rng).unwrap();
        assert_eq!(pop.pos.len(), 10_000);
        assert_eq!(pop.neg.len(), 90_000);
        assert!(draw_population(&dist, 1, 0.5, &mut rng).is_err());
        assert!(draw_population(&dist, 10, 0.01, &mut rng).is_err());
        assert!(draw_population(&dist, 10, 1.0, &mut rng).is_err());
    }

    #[test]
    fn moments_match() {
        let mut rng = RngHandle::new(2, 0).rng();
        let n = 40_000;
        for kind in DistKind::ALL {
            let dist = ScoreDistribution::standard(kind);
            for label in [Label::Positive, Label::Negative] {
                let xs = dist.sample(label, n, &mut rng).unwrap();
                let mean = xs.iter().sum::<f64>() / n as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let sd = dist.variance(label).sqrt();
                assert!(
                    (mean - dist.mean(label)).abs() < 5.0 * sd / (n as f64).sqrt(),
                    "{kind} {label:?}: mean {mean}"
                );
                // Relative error of a sample variance is about sqrt(2 / n) for
                // light tails; 0.05 is generous for all three families.
                assert!((var / dist.variance(label) - 1.0).abs() < 0.05);
            }
        }
    }

    #[test]
    fn uniform_support() {
        let mut rng = RngHandle::new(3, 0).rng();
        let dist = ScoreDistribution::standard(DistKind::OffsetUniform);
        let pop = draw_population(&dist, 5000, 0.3, &mut rng).unwrap();
        assert!(pop.pos.iter().all(|&s| (0.5..=1.5).contains(&s)));
        assert!(pop.neg.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn beta_quantile_inverts_cdf() {
        let dist = ScoreDistribution::standard(DistKind::Bibeta);
        let beta = Beta::new(5.0, 2.0).unwrap();
        for q in [0.01, 0.2, 0.5, 0.9, 0.999] {
            let x = dist.quantile(Label::Positive, q).unwrap();
            assert!((beta.cdf(x) - q).abs() < 1e-10);
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("bibeta".parse::<DistKind>().unwrap(), DistKind::Bibeta);
        let err = "cauchy".parse::<DistKind>().unwrap_err().to_string();
        assert!(err.contains("binormal") && err.contains("offset_uniform"));
        let bad = ScoreDistribution {
            kind: DistKind::OffsetUniform,
            pos_params: (1.0, 1.0),
            neg_params: (0.0, 1.0),
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn blobs_are_reproducible() {
        let g = BlobGenerator::default();
        let a = g.dataset(200, 0.1, &mut RngHandle::new(4, 0).rng()).unwrap();
        let b = g.dataset(200, 0.1, &mut RngHandle::new(4, 0).rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_positives(), 20);
        assert_eq!(a.dim(), 2);
    }
}
