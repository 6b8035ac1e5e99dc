//! Scalar surrogate losses for the 0-1 ranking indicator and the precision
//! link `σ(u) = u / (1 + u)`.
//!
//! * `ell1` is a one-sided Huber loss used for the false-positive count. It is
//!   non-increasing on each side of the origin with a continuous derivative,
//!   but its value steps from 0 up to 1 at the origin.
//! * `ell2` is a one-sided sigmoid loss used for the true-positive count. It
//!   stays below the 0-1 indicator and tends to it as `tau2 -> 0`.
//!
//! The checked functions validate their arguments. The estimator hot loops go
//! through [`SurrogateParams`], which is validated once on construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator floor used when none is given.
pub const DEFAULT_DENOM_FLOOR: f64 = 1e-8;

/// Surrogate hyperparameters shared by the metrics and estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub tau1: f64,
    pub tau2: f64,
    pub prior_pi: f64,
    #[serde(default = "default_floor")]
    pub denom_floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_DENOM_FLOOR
}

impl SurrogateParams {
    pub fn new(tau1: f64, tau2: f64, prior_pi: f64) -> Result<Self> {
        Self::with_floor(tau1, tau2, prior_pi, DEFAULT_DENOM_FLOOR)
    }

    pub fn with_floor(tau1: f64, tau2: f64, prior_pi: f64, denom_floor: f64) -> Result<Self> {
        let params = Self {
            tau1,
            tau2,
            prior_pi,
            denom_floor,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau1, "tau1")?;
        check_tau(self.tau2, "tau2")?;
        if !(self.prior_pi > 0.0 && self.prior_pi < 1.0) {
            return Err(Error::domain(format!("prior {} not in (0, 1)", self.prior_pi)));
        }
        if !(self.denom_floor > 0.0 && self.denom_floor.is_finite()) {
            return Err(Error::domain(format!(
                "denominator floor {} must be positive",
                self.denom_floor
            )));
        }
        Ok(())
    }

    pub fn with_prior(mut self, prior_pi: f64) -> Result<Self> {
        self.prior_pi = prior_pi;
        self.validate()?;
        Ok(self)
    }

    /// The class-ratio factor `(1 - π) / π`.
    pub fn odds(&self) -> f64 {
        (1.0 - self.prior_pi) / self.prior_pi
    }

    #[inline]
    pub(crate) fn l1(&self, x: f64) -> f64 {
        huber(x, self.tau1)
    }

    #[inline]
    pub(crate) fn l1_prime(&self, x: f64) -> f64 {
        huber_prime(x, self.tau1)
    }

    #[inline]
    pub(crate) fn l2(&self, x: f64) -> f64 {
        soft_step(x, self.tau2)
    }

    #[inline]
    pub(crate) fn l2_prime(&self, x: f64) -> f64 {
        soft_step_prime(x, self.tau2)
    }
}

fn check_tau(tau: f64, name: &str) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {tau} must be positive")))
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("surrogate argument {x} is not finite")))
    }
}

#[inline]
pub(crate) fn huber(x: f64, tau1: f64) -> f64 {
    if x < 0.0 {
        -2.0 * x / tau1
    } else if x < tau1 {
        let r = 1.0 - x / tau1;
        r * r
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn huber_prime(x: f64, tau1: f64) -> f64 {
    if x < 0.0 {
        -2.0 / tau1
    } else if x < tau1 {
        -2.0 * (1.0 - x / tau1) / tau1
    } else {
        0.0
    }
}

// (e^{-x/τ} - 1) / (e^{-x/τ} + 1) == tanh(-x / 2τ), which never overflows.
#[inline]
pub(crate) fn soft_step(x: f64, tau2: f64) -> f64 {
    if x < 0.0 {
        (-x / (2.0 * tau2)).tanh()
    } else {
        0.0
    }
}

// Right derivative at the kink x = 0.
#[inline]
pub(crate) fn soft_step_prime(x: f64, tau2: f64) -> f64 {
    if x < 0.0 {
        let t = (x / (2.0 * tau2)).tanh();
        -(1.0 - t * t) / (2.0 * tau2)
    } else {
        0.0
    }
}

/// One-sided Huber loss.
pub fn ell1(x: f64, tau1: f64) -> Result<f64> {
    check_x(x)?;
    check_tau(tau1, "tau1")?;
    Ok(huber(x, tau1))
}

pub fn ell1_prime(x: f64, tau1: f64) -> Result<f64> {
    check_x(x)?;
    check_tau(tau1, "tau1")?;
    Ok(huber_prime(x, tau1))
}

/// One-sided sigmoid loss, in `[0, 1)`.
pub fn ell2(x: f64, tau2: f64) -> Result<f64> {
    check_x(x)?;
    check_tau(tau2, "tau2")?;
    Ok(soft_step(x, tau2))
}

pub fn ell2_prime(x: f64, tau2: f64) -> Result<f64> {
    check_x(x)?;
    check_tau(tau2, "tau2")?;
    Ok(soft_step_prime(x, tau2))
}

#[inline]
pub(crate) fn link(u: f64) -> f64 {
    u / (1.0 + u)
}

#[inline]
pub(crate) fn link_prime(u: f64) -> f64 {
    let d = 1.0 + u;
    1.0 / (d * d)
}

/// `σ(u) = u / (1 + u)` for a non-negative loss ratio.
pub fn sigma(u: f64) -> Result<f64> {
    check_ratio(u)?;
    Ok(link(u))
}

pub fn sigma_prime(u: f64) -> Result<f64> {
    check_ratio(u)?;
    Ok(link_prime(u))
}

fn check_ratio(u: f64) -> Result<()> {
    if u >= 0.0 && !u.is_nan() {
        Ok(())
    } else {
        Err(Error::domain(format!("loss ratio {u} must be non-negative")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_one(x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            0.0
        }
    }

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn huber_values() {
        assert_eq!(ell1(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(ell1(2.5, 2.5).unwrap(), 0.0);
        assert_eq!(ell1(-1.0, 1.0).unwrap(), 2.0);
        assert_eq!(ell1_prime(0.0, 1.0).unwrap(), -2.0);
        assert_eq!(ell1_prime(-0.5, 1.0).unwrap(), -2.0);
        assert_eq!(ell1_prime(0.7, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn huber_derivative_matches_fd() {
        let fd = central_diff(|x| huber(x, 1.0), 0.3, 1e-5);
        assert!((ell1_prime(0.3, 1.0).unwrap() - fd).abs() < 1e-8);
    }

    #[test]
    fn soft_step_values() {
        assert_eq!(ell2(0.0, 0.3).unwrap(), 0.0);
        let tau = 0.4;
        let x = -tau * 3f64.ln();
        assert!((ell2(x, tau).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(ell2(-1e300, 0.01).unwrap(), 1.0);
        assert!(ell2(-50.0, 1.0).unwrap() <= 1.0);
        assert_eq!(ell2_prime(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(ell2_prime(1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn soft_step_derivative_matches_fd() {
        let fd = central_diff(|x| soft_step(x, 0.5), -0.7, 1e-5);
        assert!((ell2_prime(-0.7, 0.5).unwrap() - fd).abs() < 1e-8);
    }

    #[test]
    fn link_values() {
        assert_eq!(sigma(0.0).unwrap(), 0.0);
        assert_eq!(sigma_prime(0.0).unwrap(), 1.0);
        assert_eq!(sigma(1.0).unwrap(), 0.5);
        assert_eq!(sigma_prime(1.0).unwrap(), 0.25);
        assert_eq!(sigma(3.0).unwrap(), 0.75);
        assert!(sigma(-0.1).is_err());
        assert!(sigma_prime(f64::NAN).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(ell1(f64::NAN, 1.0).is_err());
        assert!(ell1(f64::INFINITY, 1.0).is_err());
        assert!(ell2(f64::NEG_INFINITY, 1.0).is_err());
        assert!(ell1(0.0, 0.0).is_err());
        assert!(ell2_prime(0.0, -1.0).is_err());
        assert!(SurrogateParams::new(1.0, 1.0, 1.0).is_err());
        assert!(SurrogateParams::with_floor(1.0, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn soft_step_tends_to_indicator() {
        for &x in &[-2.0, -0.3, -0.01, 0.01, 0.5] {
            let gap = (soft_step(x, 1e-4) - zero_one(x)).abs();
            assert!(gap < 1e-12, "x = {x}: gap {gap}");
        }
    }

    #[test]
    fn fd_sweep_thousand_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..1000 {
            let tau1 = rng.random_range(0.1..2.0);
            let tau2 = rng.random_range(0.05..2.0);
            let x: f64 = rng.random_range(-3.0..3.0);
            if x.abs() > 2.0 * h && (x - tau1).abs() > 2.0 * h {
                let fd = central_diff(|x| huber(x, tau1), x, h);
                assert!((huber_prime(x, tau1) - fd).abs() <= 1e-6, "ell1 at {x}");
            }
            if x.abs() > 2.0 * h {
                let fd = central_diff(|x| soft_step(x, tau2), x, h);
                assert!((soft_step_prime(x, tau2) - fd).abs() <= 1e-6, "ell2 at {x}");
            }
        }
    }

    proptest! {
        #[test]
        fn soft_step_below_indicator(x in -50.0f64..50.0, tau in 0.01f64..5.0) {
            let v = soft_step(x, tau);
            prop_assert!(v >= 0.0 && v <= zero_one(x));
        }

        #[test]
        fn huber_above_indicator_off_gap(x in -50.0f64..50.0, tau in 0.01f64..5.0) {
            // ell1 < 1 on (-tau1/2, 0); the bound only holds outside it.
            prop_assume!(!(x > -tau / 2.0 && x < 0.0));
            prop_assert!(huber(x, tau) >= zero_one(x));
        }

        #[test]
        fn losses_non_increasing(a in -10.0f64..10.0, b in -10.0f64..10.0, t1 in 0.05f64..3.0, t2 in 0.05f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            // ell1 is monotone on each side of its jump at 0.
            if (lo < 0.0) == (hi < 0.0) {
                prop_assert!(huber(lo, t1) >= huber(hi, t1));
            }
            prop_assert!(soft_step(lo, t2) >= soft_step(hi, t2));
            prop_assert!(huber_prime(a, t1) <= 0.0);
            prop_assert!(soft_step_prime(a, t2) <= 0.0);
        }

        #[test]
        fn huber_derivative_continuous(tau in 0.05f64..3.0) {
            let eps = 1e-9 * tau;
            for &k in &[0.0, tau] {
                prop_assert!((huber_prime(k - eps, tau) - huber_prime(k + eps, tau)).abs() < 1e-6);
            }
            // The value is continuous at tau1 but jumps from 0 to 1 at 0.
            prop_assert!((huber(tau - eps, tau) - huber(tau + eps, tau)).abs() < 1e-12);
            prop_assert!((huber(eps, tau) - huber(-eps, tau) - 1.0).abs() < 1e-7);
        }
    }
}
