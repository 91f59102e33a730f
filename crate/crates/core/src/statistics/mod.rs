//! Test statistics on the partial sum process.
//!
//! * [`multiscale_statistic`]: the seminorm `|S|_rho` over a grid of intervals,
//!   `max |S(j/n) - S(i/n)| / rho((j - i)/n)`.
//! * [`gof_statistic_singleton`]: the same on residuals from a fixed signal.
//! * [`constant_class_statistic`]: localized fit against constant signals.
//! * [`scan_statistic`], [`ds_statistic`]: the unweighted and additively penalized
//!   benchmarks.

mod constant;
pub mod sup;

use serde::{Deserialize, Serialize};

pub(crate) use constant::seminorm_weights;
pub use constant::{
    constant_class_exceeds, constant_class_fit, constant_class_statistic, InnerPairs,
    ShortIntervalDecisions, EXACT_INNER_MAX,
};

use crate::error::{Error, Result};
use crate::grids::{GridKind, IntervalGrid};
use crate::process::{Modulus, PartialSumProcess, TimeSeries};
use crate::scalar::Scalar;
use sup::{sup_full, sup_pairs_par, Best, Score};

/// Value of a sup-type statistic with the pair attaining it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticResult<T> {
    pub value: T,
    pub argmax_pair: (usize, usize),
    pub grid_kind: GridKind,
    pub modulus: Modulus,
}

/// Mean function `f_n(t)` for `t = 1..=n`.
#[derive(Clone, Debug, PartialEq)]
pub enum SignalSpec<T> {
    Zero,
    Singleton(Vec<T>),
    /// `mu` on samples `a + 1..=b` (1-based), zero elsewhere.
    BoxSignal {
        a: usize,
        b: usize,
        mu: T,
    },
}

impl<T: Scalar> SignalSpec<T> {
    /// Mean vector of length `n`.
    pub fn mean(&self, n: usize) -> Result<Vec<T>> {
        match self {
            SignalSpec::Zero => Ok(vec![T::zero(); n]),
            SignalSpec::Singleton(f) => {
                if f.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        got: f.len(),
                    });
                }
                Ok(f.clone())
            }
            &SignalSpec::BoxSignal { a, b, mu } => {
                if a >= b || b > n {
                    return Err(Error::InvalidInput(format!(
                        "box signal needs 0 <= a < b <= n, got a = {a}, b = {b}, n = {n}"
                    )));
                }
                let mut f = vec![T::zero(); n];
                f[a..b].fill(mu);
                Ok(f)
            }
        }
    }
}

pub(crate) fn check_resolution<T: Scalar>(
    p: &PartialSumProcess<T>,
    g: &IntervalGrid,
) -> Result<()> {
    if g.n_ref() != p.n() {
        return Err(Error::ResolutionMismatch {
            grid: g.n_ref(),
            data: p.n(),
        });
    }
    Ok(())
}

/// Sup of the given scores over `g` on path `x`.
pub(crate) fn sup_on_grid<T: Scalar>(
    x: &[T],
    g: &IntervalGrid,
    scores: &[Score<'_, T>],
    want_pair: bool,
) -> Vec<Best<T>> {
    match g.explicit_pairs() {
        Some(pairs) => sup_pairs_par(x, pairs, scores),
        None => sup_full(x, g.min_len(), scores, want_pair),
    }
}

/// `|S|_{rho, g} = max over (i, j) in g of |S(j/n) - S(i/n)| / rho((j - i)/n)`.
///
/// Ties go to the shortest, then leftmost, pair.
pub fn multiscale_statistic<T: Scalar>(
    p: &PartialSumProcess<T>,
    m: &Modulus,
    g: &IntervalGrid,
) -> Result<StatisticResult<T>> {
    check_resolution(p, g)?;
    let w = seminorm_weights::<T>(m, p.n());
    let best = sup_on_grid(p.prefix(), g, &[Score::new(&w)], true)[0];
    Ok(StatisticResult {
        value: best.value,
        argmax_pair: best.pair,
        grid_kind: g.kind(),
        modulus: *m,
    })
}

/// Seminorm of the residual process `Y - f0`.
pub fn gof_statistic_singleton<T: Scalar>(
    s: &TimeSeries<T>,
    f0: &SignalSpec<T>,
    m: &Modulus,
    g: &IntervalGrid,
) -> Result<StatisticResult<T>> {
    let r = s.residuals(&f0.mean(s.len())?)?;
    multiscale_statistic(&PartialSumProcess::new(&r), m, g)
}

/// `max over g of |Y_{i+1} + ... + Y_j| / sqrt(j - i)`.
pub fn scan_statistic<T: Scalar>(p: &PartialSumProcess<T>, g: &IntervalGrid) -> Result<T> {
    check_resolution(p, g)?;
    let w = scan_weights::<T>(p.n());
    Ok(sup_on_grid(p.prefix(), g, &[Score::new(&w)], false)[0].value)
}

/// `max over g, j - i >= min_len, of (scan(i, j) - sigma sqrt(2 log(e n/(j - i))))_+`.
pub fn ds_statistic<T: Scalar>(
    p: &PartialSumProcess<T>,
    sigma: T,
    g: &IntervalGrid,
    min_len: usize,
) -> Result<T> {
    check_resolution(p, g)?;
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::Domain(format!(
            "DS statistic needs sigma > 0, got {sigma}"
        )));
    }
    if min_len == 0 {
        return Err(Error::Domain("DS statistic needs min_len >= 1".into()));
    }
    let g = g.with_min_len(min_len)?;
    let w = scan_weights::<T>(p.n());
    let off = ds_offsets(p.n(), sigma);
    let best = sup_on_grid(p.prefix(), &g, &[Score::with_offset(&w, &off)], false)[0];
    Ok(best.value.max(T::zero()))
}

/// `1 / sqrt(d)`, zero at `d = 0`.
pub(crate) fn scan_weights<T: Scalar>(n: usize) -> Vec<T> {
    (0..=n)
        .map(|d| {
            if d == 0 {
                T::zero()
            } else {
                T::one() / T::from_usize_lossy(d).sqrt()
            }
        })
        .collect()
}

/// `sigma sqrt(2 log(e n / d))`.
pub(crate) fn ds_offsets<T: Scalar>(n: usize, sigma: T) -> Vec<T> {
    let nf = T::from_usize_lossy(n);
    (0..=n)
        .map(|d| {
            if d == 0 {
                T::infinity()
            } else {
                let ratio = nf / T::from_usize_lossy(d);
                sigma * (T::lit(2.0) * (T::one() + ratio.ln())).sqrt()
            }
        })
        .collect()
}
