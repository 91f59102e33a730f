//! Localized goodness-of-fit against the class of constant signals.
//!
//! For an interval `I = (i0, j0]` and a candidate level `a` on the data scale,
//!
//! ```text
//! phi(a) = max over inner pairs (i, j) of |P_j - P_i - (j - i) a| / (sqrt(n) rho((j - i)/n))
//! ```
//!
//! with `P` the raw prefix sums. Writing `mean = (P_j - P_i)/(j - i)` and
//! `pen = sqrt(n) rho((j - i)/n) / (j - i)`, each term is `|a - mean| / pen`, so
//! `phi` is convex and piecewise linear, and `min_a phi(a) > c` holds exactly when
//! the windows `[mean - c pen, mean + c pen]` have empty intersection. The value is
//! found by golden-section search; significance decisions use the exact test.

use crate::error::{Error, Result};
use crate::grids::IntervalGrid;
use crate::process::{Modulus, PartialSumProcess};
use crate::scalar::Scalar;

/// Longest interval whose inner pairs are enumerated in full by [`InnerPairs::Auto`].
pub const EXACT_INNER_MAX: usize = 512;

/// Which sub-pairs of the localized interval enter the statistic.
#[derive(Clone, Copy, Debug)]
pub enum InnerPairs<'a> {
    /// Every sub-pair up to [`EXACT_INNER_MAX`]; longer intervals use the dyadic
    /// grid built on the interval plus every pair sharing an endpoint with it.
    Auto,
    /// Every sub-pair.
    All,
    /// Pairs of a grid at the data resolution lying inside the interval.
    Grid(&'a IntervalGrid),
}

/// Per-pair `(mean, 1/pen)` for the inner pairs of `(i0, j0)`.
fn inner_terms<T: Scalar>(
    p: &PartialSumProcess<T>,
    (i0, j0): (usize, usize),
    weight: &[T],
    inner: InnerPairs<'_>,
) -> Result<Vec<(T, T)>> {
    let n = p.n();
    if i0 >= j0 || j0 > n {
        return Err(Error::Index { i: i0, j: j0, n });
    }
    if j0 - i0 < 2 {
        return Err(Error::InvalidInput(format!(
            "constant-class statistic needs an interval of at least 2 samples, got ({i0}, {j0}]"
        )));
    }
    let term = |i: usize, j: usize| {
        let d = j - i;
        let df = T::from_usize_lossy(d);
        (p.increment(i, j) / df, weight[d] * df)
    };
    let len = j0 - i0;
    let mut out = Vec::new();
    match inner {
        InnerPairs::All => {
            for i in i0..j0 {
                for j in i + 1..=j0 {
                    out.push(term(i, j));
                }
            }
        }
        InnerPairs::Auto if len <= EXACT_INNER_MAX => {
            return inner_terms(p, (i0, j0), weight, InnerPairs::All);
        }
        InnerPairs::Auto => {
            let mut pairs: Vec<(usize, usize)> = IntervalGrid::dyadic(len)?
                .iter()
                .map(|(a, b)| (a + i0, b + i0))
                .collect();
            pairs.extend((i0 + 1..=j0).map(|j| (i0, j)));
            pairs.extend((i0 + 1..j0).map(|i| (i, j0)));
            pairs.sort_unstable();
            pairs.dedup();
            out.extend(pairs.into_iter().map(|(i, j)| term(i, j)));
        }
        InnerPairs::Grid(g) => {
            if g.n_ref() != n {
                return Err(Error::ResolutionMismatch {
                    grid: g.n_ref(),
                    data: n,
                });
            }
            out.extend(
                g.iter()
                    .filter(|&(i, j)| i0 <= i && j <= j0)
                    .map(|(i, j)| term(i, j)),
            );
            if out.is_empty() {
                return Err(Error::EmptyCandidates(format!(
                    "grid has no pair inside ({i0}, {j0}]"
                )));
            }
        }
    }
    Ok(out)
}

fn phi<T: Scalar>(terms: &[(T, T)], a: T) -> T {
    terms.iter().fold(T::zero(), |m, &(mean, inv_pen)| {
        m.max((a - mean).abs() * inv_pen)
    })
}

/// Weights `1 / (sqrt(n) rho(d/n))`, zero at `d = 0`.
pub(crate) fn seminorm_weights<T: Scalar>(m: &Modulus, n: usize) -> Vec<T> {
    m.divisors::<T>(n)
        .into_iter()
        .map(|v| {
            if v > T::zero() {
                T::one() / v
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Golden-section minimum of a convex function on `[lo, hi]`; returns the
/// smallest value evaluated.
pub(crate) fn golden_min<T: Scalar>(mut f: impl FnMut(T) -> T, lo: T, hi: T) -> (T, T) {
    let tol = T::lit(1e-8) * (hi - lo);
    let r = T::lit(0.618_033_988_749_894_8);
    let (mut a, mut b) = (lo, hi);
    let mut best = {
        let (fa, fb) = (f(a), f(b));
        if fb < fa {
            (b, fb)
        } else {
            (a, fa)
        }
    };
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if !(b - a > tol) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

/// Minimum over constant levels of the localized residual statistic on
/// `(i0, j0]`, with the minimizing level.
pub fn constant_class_fit<T: Scalar>(
    p: &PartialSumProcess<T>,
    interval: (usize, usize),
    m: &Modulus,
    inner: InnerPairs<'_>,
) -> Result<(T, T)> {
    let weight = seminorm_weights::<T>(m, p.n());
    constant_class_fit_weighted(p, interval, &weight, inner)
}

pub(crate) fn constant_class_fit_weighted<T: Scalar>(
    p: &PartialSumProcess<T>,
    interval: (usize, usize),
    weight: &[T],
    inner: InnerPairs<'_>,
) -> Result<(T, T)> {
    let terms = inner_terms(p, interval, weight, inner)?;
    let (lo, hi) = terms
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(l, h), &(mu, _)| {
            (l.min(mu), h.max(mu))
        });
    if !(hi > lo) {
        return Ok((phi(&terms, lo), lo));
    }
    let (a, v) = golden_min(|a| phi(&terms, a), lo, hi);
    Ok((v, a))
}

/// `inf_a sup |S(j/n) - S(i/n) - a (j - i)/sqrt(n)| / rho((j - i)/n)` over the
/// inner pairs of `(i0, j0]`.
pub fn constant_class_statistic<T: Scalar>(
    p: &PartialSumProcess<T>,
    interval: (usize, usize),
    m: &Modulus,
    inner: InnerPairs<'_>,
) -> Result<T> {
    constant_class_fit(p, interval, m, inner).map(|(v, _)| v)
}

/// Exact test `min_a phi(a) > crit` over the given inner terms.
fn exceeds<T: Scalar>(terms: impl Iterator<Item = (T, T)>, crit: T) -> bool {
    let (mut lo, mut hi) = (T::neg_infinity(), T::infinity());
    for (mean, inv_pen) in terms {
        let half = crit / inv_pen;
        lo = lo.max(mean - half);
        hi = hi.min(mean + half);
    }
    lo > hi
}

/// Exact decision `constant_class_statistic(I, Auto) > crit` for a single interval.
pub fn constant_class_exceeds<T: Scalar>(
    p: &PartialSumProcess<T>,
    interval: (usize, usize),
    weight: &[T],
    crit: T,
) -> Result<bool> {
    let terms = inner_terms(p, interval, weight, InnerPairs::Auto)?;
    Ok(exceeds(terms.into_iter(), crit))
}

/// Exact significance of every interval of length `2..=max_len` under
/// all-inner-pairs localization, for one critical value.
///
/// With `lo(i, j) = max` of the window lower ends over sub-pairs of `(i, j]` and
/// `hi` the matching minimum, `lo(i, j) = max(term(i, j), lo(i+1, j), lo(i, j-1))`;
/// lengths are processed in increasing order with O(n) working memory.
pub struct ShortIntervalDecisions {
    n: usize,
    max_len: usize,
    bits: Vec<u64>,
}

impl ShortIntervalDecisions {
    pub fn new<T: Scalar>(p: &PartialSumProcess<T>, weight: &[T], crit: T, max_len: usize) -> Self {
        let n = p.n();
        let max_len = max_len.min(n);
        let words = (n * (max_len + 1)).div_ceil(64);
        let mut bits = vec![0u64; words];
        let bounds = |i: usize, d: usize| {
            let df = T::from_usize_lossy(d);
            let mean = p.increment(i, i + d) / df;
            let half = crit / (weight[d] * df);
            (mean - half, mean + half)
        };
        let (mut lo, mut hi): (Vec<T>, Vec<T>) = (0..n).map(|i| bounds(i, 1)).unzip();
        for d in 2..=max_len {
            for i in 0..=n - d {
                let (l, h) = bounds(i, d);
                lo[i] = l.max(lo[i]).max(lo[i + 1]);
                hi[i] = h.min(hi[i]).min(hi[i + 1]);
                if lo[i] > hi[i] {
                    let at = d * n + i;
                    bits[at / 64] |= 1 << (at % 64);
                }
            }
        }
        Self { n, max_len, bits }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// `None` outside the covered lengths.
    pub fn get(&self, i: usize, j: usize) -> Option<bool> {
        let d = j.checked_sub(i)?;
        if d < 2 || d > self.max_len || j > self.n {
            return None;
        }
        let at = d * self.n + i;
        Some(self.bits[at / 64] >> (at % 64) & 1 == 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::TimeSeries;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn process(y: &[f64]) -> PartialSumProcess<f64> {
        PartialSumProcess::new(&TimeSeries::new(y.to_vec()).unwrap())
    }

    fn dense_oracle(
        y: &[f64],
        (i0, j0): (usize, usize),
        m: &Modulus,
        lo: f64,
        hi: f64,
        step: f64,
    ) -> f64 {
        // Direct evaluation from the seminorm form on S.
        let n = y.len();
        let s = |k: usize| y[..k].iter().sum::<f64>() / (n as f64).sqrt();
        let mut best = f64::INFINITY;
        let steps = ((hi - lo) / step).round() as usize;
        let pairs: Vec<(usize, usize)> = (i0..j0)
            .flat_map(|i| (i + 1..=j0).map(move |j| (i, j)))
            .collect();
        let rho: Vec<f64> = (0..=n)
            .map(|d| {
                if d == 0 {
                    0.0
                } else {
                    m.eval(d as f64 / n as f64).unwrap()
                }
            })
            .collect();
        let sv: Vec<f64> = (0..=n).map(s).collect();
        for k in 0..=steps {
            let a = lo + k as f64 * step;
            let v = pairs
                .iter()
                .map(|&(i, j)| {
                    let d = j - i;
                    (sv[j] - sv[i] - a * d as f64 / (n as f64).sqrt()).abs() / rho[d]
                })
                .fold(0.0, f64::max);
            best = best.min(v);
        }
        best
    }

    #[test]
    fn constant_series_fits_exactly() {
        let p = process(&[3.5; 20]);
        let v = constant_class_statistic(&p, (0, 20), &Modulus::rho2(), InnerPairs::All).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
        let (_, a) = constant_class_fit(&p, (4, 15), &Modulus::rho2(), InnerPairs::All).unwrap();
        assert!((a - 3.5).abs() < 1e-12);
    }

    #[test]
    fn step_matches_dense_grid_search() {
        let y = [0.0, 0.0, 0.0, 0.0, 4.0, 4.0, 4.0, 4.0];
        let m = Modulus::rho2();
        let p = process(&y);
        let got = constant_class_statistic(&p, (0, 8), &m, InnerPairs::All).unwrap();
        let want = dense_oracle(&y, (0, 8), &m, 0.0, 4.0, 1e-6);
        assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
    }

    #[test]
    fn shift_invariant_and_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = Modulus::rho2a(5.0).unwrap();
        let base = constant_class_statistic(&process(&y), (5, 50), &m, InnerPairs::All).unwrap();
        let shifted: Vec<f64> = y.iter().map(|v| v + 7.0).collect();
        let scaled: Vec<f64> = y.iter().map(|v| -2.5 * v).collect();
        let s = constant_class_statistic(&process(&shifted), (5, 50), &m, InnerPairs::All).unwrap();
        let c = constant_class_statistic(&process(&scaled), (5, 50), &m, InnerPairs::All).unwrap();
        assert!((s - base).abs() < 1e-7 * base.max(1.0));
        assert!((c - 2.5 * base).abs() < 1e-7 * base.max(1.0));
    }

    #[test]
    fn degenerate_interval_rejected() {
        let p = process(&[1.0, 2.0, 3.0]);
        assert!(constant_class_statistic(&p, (1, 2), &Modulus::rho2(), InnerPairs::All).is_err());
        assert!(constant_class_statistic(&p, (0, 4), &Modulus::rho2(), InnerPairs::All).is_err());
    }

    #[test]
    fn short_decisions_agree_with_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut y: Vec<f64> = (0..120).map(|_| rng.random_range(-1.0..1.0)).collect();
        for v in &mut y[60..] {
            *v += 1.5;
        }
        let m = Modulus::rho2();
        let p = process(&y);
        let w = seminorm_weights::<f64>(&m, p.n());
        for crit in [0.3, 0.6, 0.9] {
            let dec = ShortIntervalDecisions::new(&p, &w, crit, 40);
            for d in 2..=40 {
                for i in (0..=120 - d).step_by(3) {
                    let v = constant_class_statistic(&p, (i, i + d), &m, InnerPairs::All).unwrap();
                    let single = constant_class_exceeds(&p, (i, i + d), &w, crit).unwrap();
                    assert_eq!(dec.get(i, i + d), Some(single));
                    // Golden value is at least the exact minimum and at most 1e-6 above it.
                    if (v - crit).abs() > 1e-6 {
                        assert_eq!(v > crit, single, "({i}, {}) v = {v}", i + d);
                    }
                }
            }
            assert_eq!(dec.get(0, 41), None);
        }
    }

    #[test]
    fn long_intervals_use_sparse_inner_pairs() {
        let n = 1200;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = process(&y);
        let m = Modulus::rho2();
        let auto = constant_class_statistic(&p, (0, 1000), &m, InnerPairs::Auto).unwrap();
        let g = IntervalGrid::dyadic(n).unwrap();
        let sparse = constant_class_statistic(&p, (0, 1000), &m, InnerPairs::Grid(&g)).unwrap();
        assert!(auto > 0.0 && sparse > 0.0);
        let short = constant_class_statistic(&p, (0, 500), &m, InnerPairs::Auto).unwrap();
        let all = constant_class_statistic(&p, (0, 500), &m, InnerPairs::All).unwrap();
        assert_eq!(short, all);
    }
}
