//! Piecewise-linear resampling of a batch of scores onto a fixed length.
//!
//! The `n` batch scores are sorted in descending order and placed at knot
//! positions `i / n` (`i = 1..=n`, measured as a quantile from the top). An
//! extra knot `u_0 = clamp(2 u_1 - u_2)` sits at position 0 and a lower knot
//! `u_{n+1} = clamp(2 u_n - u_{n-1})` at `(n + 1) / n`. Output entry `j` is
//! the piecewise-linear curve through the knots evaluated at `j / N`, so
//! every output is a convex combination of two adjacent knots.

use serde::{Deserialize, Serialize};

use crate::data::ScoreRange;
use crate::error::{Error, Result};

/// Target length and admissible score range of an interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpConfig {
    pub target_len: usize,
    pub range: ScoreRange,
}

impl InterpConfig {
    pub fn new(target_len: usize, range_lo: f64, range_hi: f64) -> Result<Self> {
        if target_len == 0 {
            return Err(Error::spec("interpolation target length must be positive"));
        }
        Ok(Self {
            target_len,
            range: ScoreRange::new(range_lo, range_hi)?,
        })
    }
}

/// Sorted scores plus both extrapolated boundary knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Knots {
    /// `u_0, u_1, ..., u_n, u_{n+1}`, non-increasing.
    pub values: Vec<f64>,
}

impl Knots {
    pub fn n(&self) -> usize {
        self.values.len() - 2
    }

    pub fn upper(&self) -> f64 {
        self.values[0]
    }

    pub fn lower(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Returns `u` sorted descending, with NaN-free total ordering; ties keep
/// their input order.
pub fn sort_descending(u: &[f64]) -> Vec<f64> {
    let mut v = u.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Descending sort permutation: `perm[k]` is the input index of the `k`-th
/// largest score.
pub(crate) fn descending_order(u: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| u[b].total_cmp(&u[a]));
    idx
}

fn validate(u: &[f64], cfg: &InterpConfig) -> Result<()> {
    if u.is_empty() {
        return Err(Error::EmptyClass("interpolation input is empty"));
    }
    if u.len() > cfg.target_len {
        return Err(Error::Shape(format!(
            "cannot interpolate {} scores down to {}",
            u.len(),
            cfg.target_len
        )));
    }
    u.iter().try_for_each(|&x| {
        if x.is_nan() {
            Err(Error::domain("NaN score"))
        } else {
            cfg.range.check(x)
        }
    })
}

/// Builds the knot vector for `u`.
pub fn knots(u: &[f64], range: ScoreRange) -> Result<Knots> {
    if u.is_empty() {
        return Err(Error::EmptyClass("interpolation input is empty"));
    }
    let sorted = sort_descending(u);
    let n = sorted.len();
    let (upper, lower) = if n == 1 {
        (sorted[0], sorted[0])
    } else {
        (
            range.clamp(2.0 * sorted[0] - sorted[1]),
            range.clamp(2.0 * sorted[n - 1] - sorted[n - 2]),
        )
    };
    let mut values = Vec::with_capacity(n + 2);
    values.push(upper);
    values.extend_from_slice(&sorted);
    values.push(lower);
    Ok(Knots { values })
}

// Position of output j (1-based) in knot units is j * n / N. Integer division
// gives the left knot and the interpolation weight exactly.
#[inline]
fn segment(j: usize, n: usize, target: usize) -> (usize, f64) {
    let num = j * n;
    (num / target, (num % target) as f64 / target as f64)
}

/// Resamples `u` to `cfg.target_len` values.
pub fn interpolate(u: &[f64], cfg: &InterpConfig) -> Result<Vec<f64>> {
    validate(u, cfg)?;
    let n = u.len();
    let target = cfg.target_len;
    if n == target {
        return Ok(sort_descending(u));
    }
    let k = knots(u, cfg.range)?.values;
    Ok((1..=target)
        .map(|j| {
            let (i, t) = segment(j, n, target);
            let (a, b) = (k[i], k[i + 1]);
            // Clamping to the segment keeps the output sorted under rounding.
            (a + t * (b - a)).clamp(b, a)
        })
        .collect())
}

/// Sparse Jacobian of [`interpolate`] with respect to its (unsorted) input:
/// `rows[j]` lists `(input index, ∂m_j/∂u_index)`.
///
/// Clamped boundary knots are constant, so they contribute nothing.
pub fn interpolate_jacobian(u: &[f64], cfg: &InterpConfig) -> Result<Vec<Vec<(usize, f64)>>> {
    validate(u, cfg)?;
    let n = u.len();
    let target = cfg.target_len;
    let order = descending_order(u);
    if n == target {
        return Ok(order.iter().map(|&src| vec![(src, 1.0)]).collect());
    }
    let k = knots(u, cfg.range)?;
    // Derivative of knot `i` as a combination of sorted positions (0-based).
    let knot_terms = |i: usize| -> Vec<(usize, f64)> {
        if (1..=n).contains(&i) {
            return vec![(i - 1, 1.0)];
        }
        if n == 1 {
            return vec![(0, 1.0)];
        }
        let (raw, a, b) = if i == 0 {
            (2.0 * k.values[1] - k.values[2], 0, 1)
        } else {
            (2.0 * k.values[n] - k.values[n - 1], n - 1, n - 2)
        };
        if cfg.range.lo < raw && raw < cfg.range.hi {
            vec![(a, 2.0), (b, -1.0)]
        } else {
            Vec::new()
        }
    };
    let rows = (1..=target)
        .map(|j| {
            let (i, t) = segment(j, n, target);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
            let mut add = |terms: Vec<(usize, f64)>, w: f64| {
                for (pos, d) in terms {
                    let src = order[pos];
                    match row.iter_mut().find(|(s, _)| *s == src) {
                        Some(e) => e.1 += w * d,
                        None => row.push((src, w * d)),
                    }
                }
            };
            add(knot_terms(i), 1.0 - t);
            if t != 0.0 {
                add(knot_terms(i + 1), t);
            }
            row
        })
        .collect();
    Ok(rows)
}

/// Evaluates the linear interpolant of `values` on the uniform grid
/// `0, 1/m, ..., 1` (`m = values.len() - 1`) at `x ∈ [0, 1]`.
pub fn lerp_uniform(values: &[f64], x: f64) -> f64 {
    let m = values.len() - 1;
    if m == 0 {
        return values[0];
    }
    let pos = x.clamp(0.0, 1.0) * m as f64;
    let i = (pos.floor() as usize).min(m - 1);
    let t = pos - i as f64;
    (1.0 - t) * values[i] + t * values[i + 1]
}

/// Sup-norm error of linear interpolation of an increasing quantile
/// function at the `i / n` quantiles (`i = 0..=n`), measured on the grid
/// `j / grid_len`, `j = 0..=grid_len`.
///
/// The knot samples must lie inside `cfg.range`; `cfg.target_len` is the grid
/// resolution.
pub fn interp_sup_error(
    quantile_fn: impl Fn(f64) -> f64,
    n: usize,
    cfg: &InterpConfig,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::spec("need at least one interpolation interval"));
    }
    let knots: Vec<f64> = (0..=n).map(|i| quantile_fn(i as f64 / n as f64)).collect();
    for (i, w) in knots.windows(2).enumerate() {
        if !(w[1] >= w[0]) {
            return Err(Error::Monotonicity(i + 1));
        }
    }
    knots.iter().try_for_each(|&x| cfg.range.check(x))?;
    let grid = cfg.target_len;
    Ok((0..=grid)
        .map(|j| {
            let x = j as f64 / grid as f64;
            (quantile_fn(x) - lerp_uniform(&knots, x)).abs()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(target: usize, lo: f64, hi: f64) -> InterpConfig {
        InterpConfig::new(target, lo, hi).unwrap()
    }

    // Independent reference: evaluate the piecewise-linear quantile curve by
    // searching for the bracketing knots in floating point.
    fn reference(u: &[f64], target: usize, lo: f64, hi: f64) -> Vec<f64> {
        let mut s = u.to_vec();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let n = s.len();
        let mut xs = vec![0.0];
        let mut ys = vec![(2.0 * s[0] - s[1]).clamp(lo, hi)];
        for (i, &v) in s.iter().enumerate() {
            xs.push((i + 1) as f64 / n as f64);
            ys.push(v);
        }
        (1..=target)
            .map(|j| {
                let x = j as f64 / target as f64;
                let k = xs.iter().rposition(|&p| p <= x + 1e-15).unwrap();
                if k + 1 == xs.len() {
                    ys[k]
                } else {
                    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
                    ys[k] + t * (ys[k + 1] - ys[k])
                }
            })
            .collect()
    }

    #[test]
    fn constant_preserved() {
        let m = interpolate(&[0.3; 5], &cfg(17, -1.0, 1.0)).unwrap();
        assert_eq!(m, vec![0.3; 17]);
        let m = interpolate(&[0.3], &cfg(4, -1.0, 1.0)).unwrap();
        assert_eq!(m, vec![0.3; 4]);
    }

    #[test]
    fn pass_through_sorts() {
        let m = interpolate(&[0.1, 0.5, -0.2], &cfg(3, -1.0, 1.0)).unwrap();
        assert_eq!(m, vec![0.5, 0.1, -0.2]);
    }

    #[test]
    fn two_point_example() {
        // u = [3, 1]: knots 5 @0, 3 @1/2, 1 @1 -> outputs at 1/4..1.
        let m = interpolate(&[3.0, 1.0], &cfg(4, -10.0, 10.0)).unwrap();
        assert_eq!(m, vec![4.0, 3.0, 2.0, 1.0]);
        assert_eq!(m, reference(&[3.0, 1.0], 4, -10.0, 10.0));
    }

    #[test]
    fn boundary_knots_clamped() {
        let k = knots(&[0.9, 0.1, -0.95], ScoreRange::new(-1.0, 1.0).unwrap()).unwrap();
        assert_eq!(k.upper(), 1.0);
        assert_eq!(k.lower(), -1.0);
        assert_eq!(k.n(), 3);
    }

    #[test]
    fn errors() {
        assert!(matches!(interpolate(&[], &cfg(3, 0.0, 1.0)), Err(Error::EmptyClass(_))));
        assert!(matches!(interpolate(&[2.0], &cfg(3, 0.0, 1.0)), Err(Error::Range { .. })));
        assert!(matches!(interpolate(&[0.1, 0.2], &cfg(1, 0.0, 1.0)), Err(Error::Shape(_))));
        assert!(InterpConfig::new(0, 0.0, 1.0).is_err());
        assert!(matches!(
            interp_sup_error(|x| -x, 4, &cfg(100, -2.0, 2.0)),
            Err(Error::Monotonicity(1))
        ));
    }

    #[test]
    fn linear_quantile_exact() {
        let err = interp_sup_error(|x| 2.0 * x - 0.5, 7, &cfg(1000, -1.0, 2.0)).unwrap();
        assert!(err < 1e-15);
    }

    #[test]
    fn quadratic_error_scaling() {
        let c = cfg(4096, 0.0, 1.0);
        let e8 = interp_sup_error(|x| x * x, 8, &c).unwrap();
        let e16 = interp_sup_error(|x| x * x, 16, &c).unwrap();
        assert!((e8 / e16 - 4.0).abs() < 1e-9);
        for n in [3usize, 8, 16, 33, 64] {
            let e = interp_sup_error(|x| x * x, n, &c).unwrap();
            assert!(e <= 1.0 / (4.0 * (n * n) as f64) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn jacobian_matches_fd() {
        let u = [0.31, -0.4, 0.77, 0.05, -0.12];
        let c = cfg(13, -1.0, 1.0);
        let jac = interpolate_jacobian(&u, &c).unwrap();
        let h = 1e-7;
        for src in 0..u.len() {
            let mut up = u;
            let mut dn = u;
            up[src] += h;
            dn[src] -= h;
            let mp = interpolate(&up, &c).unwrap();
            let mm = interpolate(&dn, &c).unwrap();
            for j in 0..13 {
                let fd = (mp[j] - mm[j]) / (2.0 * h);
                let an = jac[j].iter().find(|(s, _)| *s == src).map_or(0.0, |e| e.1);
                assert!((fd - an).abs() < 1e-6, "j={j} src={src}: {fd} vs {an}");
            }
        }
    }

    fn arb_input() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (prop::collection::vec(-1.0f64..1.0, 1..20), 0usize..40)
            .prop_map(|(u, extra)| {
                let n = u.len();
                (u, n + extra)
            })
    }

    proptest! {
        #[test]
        fn matches_reference((u, target) in arb_input()) {
            prop_assume!(u.len() >= 2);
            let m = interpolate(&u, &cfg(target, -1.0, 1.0)).unwrap();
            let r = if u.len() == target { sort_descending(&u) } else { reference(&u, target, -1.0, 1.0) };
            for (a, b) in m.iter().zip(&r) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn output_sorted_and_bounded((u, target) in arb_input()) {
            let c = cfg(target, -1.0, 1.0);
            let m = interpolate(&u, &c).unwrap();
            prop_assert_eq!(m.len(), target);
            prop_assert!(m.windows(2).all(|w| w[0] >= w[1]));
            let k = knots(&u, c.range).unwrap();
            let lo = k.lower().min(u.iter().cloned().fold(f64::INFINITY, f64::min));
            let hi = k.upper().max(u.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            prop_assert!(m.iter().all(|&x| x >= lo && x <= hi && c.range.contains(x)));
        }

        #[test]
        fn idempotent((u, target) in arb_input()) {
            let c = cfg(target, -1.0, 1.0);
            let m = interpolate(&u, &c).unwrap();
            prop_assert_eq!(interpolate(&m, &c).unwrap(), m);
        }

        #[test]
        fn mean_preserved((u, target) in arb_input()) {
            let c = cfg(target, -1.0, 1.0);
            let m = interpolate(&u, &c).unwrap();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let spread = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - u.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!((mean(&m) - mean(&u)).abs() <= spread / u.len() as f64 + 1e-12);
        }
    }
}
