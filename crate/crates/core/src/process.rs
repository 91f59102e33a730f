//! Observations, moduli of continuity and the interpolated partial sum process.
//!
//! The partial sum process of `Y_1, ..., Y_n` is
//!
//! ```text
//! S(u) = n^{-1/2} * ( sum_{t <= floor(un)} Y_t + (un - floor(un)) * Y_{floor(un)+1} )
//! ```
//!
//! All statistics in this crate only evaluate `S` at the lattice points `k/n`,
//! which reduces to the prefix sums stored in [`PartialSumProcess`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{CompensatedSum, Scalar};

/// Observed series `Y_1, ..., Y_n` (stored 0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries<T> {
    values: Vec<T>,
}

impl<T: Scalar> TimeSeries<T> {
    /// Validates `n >= 2` and finiteness.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a time series needs at least 2 observations, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "observation {} is not finite",
                pos + 1
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// `Y_t - f(t)` for a mean function given per index.
    pub fn residuals(&self, mean: &[T]) -> Result<Self> {
        if mean.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: mean.len(),
            });
        }
        Self::new(self.values.iter().zip(mean).map(|(&y, &f)| y - f).collect())
    }

    /// `c * Y_t + d`.
    pub fn affine(&self, c: T, d: T) -> Result<Self> {
        Self::new(self.values.iter().map(|&y| c * y + d).collect())
    }
}

/// The two modulus families supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusFamily {
    /// `sqrt(h) * log(e/h)^(1/alpha)`
    RhoAlpha,
    /// `sqrt(h * (a + log(e/h)))`
    Rho2a,
}

/// A modulus of continuity together with its parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modulus {
    family: ModulusFamily,
    param: f64,
}

impl Modulus {
    /// `rho_alpha`, requires `alpha` in `(0, 2]`.
    pub fn rho_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::Domain(format!(
                "rho_alpha requires alpha in (0, 2], got {alpha}"
            )));
        }
        Ok(Self {
            family: ModulusFamily::RhoAlpha,
            param: alpha,
        })
    }

    /// `rho_{2,a}`, requires finite `a >= 0`.
    pub fn rho2a(a: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::Domain(format!(
                "rho_2a requires finite a >= 0, got {a}"
            )));
        }
        Ok(Self {
            family: ModulusFamily::Rho2a,
            param: a,
        })
    }

    /// `rho_2 = rho_{2,0}`.
    pub fn rho2() -> Self {
        Self {
            family: ModulusFamily::Rho2a,
            param: 0.0,
        }
    }

    pub fn new(family: ModulusFamily, param: f64) -> Result<Self> {
        match family {
            ModulusFamily::RhoAlpha => Self::rho_alpha(param),
            ModulusFamily::Rho2a => Self::rho2a(param),
        }
    }

    pub fn family(&self) -> ModulusFamily {
        self.family
    }

    pub fn param(&self) -> f64 {
        self.param
    }

    /// Evaluates the modulus at `h` in `(0, 1]`.
    pub fn eval<T: Scalar>(&self, h: T) -> Result<T> {
        if !(h > T::zero() && h <= T::one()) {
            return Err(Error::Domain(format!(
                "modulus argument must lie in (0, 1], got {h}"
            )));
        }
        Ok(self.eval_unchecked(h))
    }

    /// Same as [`Modulus::eval`] without the domain check.
    #[inline]
    pub fn eval_unchecked<T: Scalar>(&self, h: T) -> T {
        // log(e/h) = 1 - ln(h) >= 1 on (0, 1]
        let log_term = T::one() - h.ln();
        match self.family {
            ModulusFamily::RhoAlpha => h.sqrt() * log_term.powf(T::lit(1.0 / self.param)),
            ModulusFamily::Rho2a => (h * (T::lit(self.param) + log_term)).sqrt(),
        }
    }

    /// `sqrt(n) * rho(d/n)` for `d = 0..=n` (entry 0 is unused and set to 0).
    ///
    /// Dividing an increment of raw prefix sums by this value gives the
    /// normalized increment of the partial sum process divided by `rho`.
    pub fn divisors<T: Scalar>(&self, n: usize) -> Vec<T> {
        let nf = T::from_usize_lossy(n);
        let sqrt_n = nf.sqrt();
        let mut out = Vec::with_capacity(n + 1);
        out.push(T::zero());
        for d in 1..=n {
            out.push(sqrt_n * self.eval_unchecked(T::from_usize_lossy(d) / nf));
        }
        out
    }
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            ModulusFamily::RhoAlpha => write!(f, "rho_alpha:{}", self.param),
            ModulusFamily::Rho2a => write!(f, "rho2a:{}", self.param),
        }
    }
}

impl FromStr for Modulus {
    type Err = Error;

    /// Accepts `rho2a:<a>`, `rho2` and `rho_alpha:<alpha>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "rho2" {
            return Ok(Self::rho2());
        }
        let (name, value) = s.split_once(':').ok_or_else(|| {
            Error::InvalidInput(format!(
                "modulus '{s}' must look like 'rho2a:<a>' or 'rho_alpha:<alpha>'"
            ))
        })?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad modulus parameter in '{s}'")))?;
        match name.trim() {
            "rho2a" | "rho_2a" => Self::rho2a(value),
            "rho_alpha" | "rhoalpha" => Self::rho_alpha(value),
            other => Err(Error::InvalidInput(format!(
                "unknown modulus family '{other}'"
            ))),
        }
    }
}

/// Interpolated partial sum process backed by compensated prefix sums.
#[derive(Clone, Debug)]
pub struct PartialSumProcess<T> {
    prefix: Vec<T>,
    scale: T,
}

impl<T: Scalar> PartialSumProcess<T> {
    pub fn new(series: &TimeSeries<T>) -> Self {
        Self::from_values(series.values())
    }

    /// Builds the process from raw values without series validation.
    pub fn from_values(values: &[T]) -> Self {
        let mut prefix = Vec::with_capacity(values.len() + 1);
        prefix.push(T::zero());
        let mut acc = CompensatedSum::new();
        for &y in values {
            acc.add(y);
            prefix.push(acc.value());
        }
        let scale = T::one() / T::from_usize_lossy(values.len().max(1)).sqrt();
        Self { prefix, scale }
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.prefix.len() - 1
    }

    /// `prefix[k] = Y_1 + ... + Y_k`.
    pub fn prefix(&self) -> &[T] {
        &self.prefix
    }

    /// `1 / sqrt(n)`.
    pub fn scale(&self) -> T {
        self.scale
    }

    /// Value `S(k/n)` at a lattice point.
    #[inline]
    pub fn at(&self, k: usize) -> T {
        self.prefix[k] * self.scale
    }

    /// Raw increment `Y_{i+1} + ... + Y_j`.
    #[inline]
    pub fn increment(&self, i: usize, j: usize) -> T {
        self.prefix[j] - self.prefix[i]
    }

    /// `S(u)` for `u` in `[0, 1]`, linear between lattice points.
    pub fn eval(&self, u: T) -> Result<T> {
        if !(u >= T::zero() && u <= T::one()) {
            return Err(Error::Domain(format!("S(u) requires u in [0, 1], got {u}")));
        }
        let n = self.n();
        let x = u * T::from_usize_lossy(n);
        let nearest = x.round();
        let snap = T::lit(4.0) * T::epsilon() * T::from_usize_lossy(n.max(1));
        if (x - nearest).abs() <= snap {
            let k = nearest.to_usize().unwrap_or(0).min(n);
            return Ok(self.at(k));
        }
        let k = x.floor().to_usize().unwrap_or(0).min(n - 1);
        let frac = x - T::from_usize_lossy(k);
        let y_next = self.prefix[k + 1] - self.prefix[k];
        Ok((self.prefix[k] + frac * y_next) * self.scale)
    }

    /// Local scan value `|Y_{i+1} + ... + Y_j| / sqrt(j - i)`.
    pub fn scan_value(&self, i: usize, j: usize) -> Result<T> {
        if i >= j || j > self.n() {
            return Err(Error::Index { i, j, n: self.n() });
        }
        Ok(self.increment(i, j).abs() / T::from_usize_lossy(j - i).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn modulus_examples() {
        let m = Modulus::rho2();
        assert_eq!(m.eval(1.0f64).unwrap(), 1.0);
        // sqrt(0.25 * (1 + ln 4)), checked with 50-digit arithmetic: 0.7723817646...
        assert!(close(
            m.eval(0.25f64).unwrap(),
            0.772_381_764_595_703_4,
            1e-12
        ));
        let m50 = Modulus::rho2a(50.0).unwrap();
        // sqrt(51)
        assert!(close(
            m50.eval(1.0f64).unwrap(),
            7.141_428_428_542_85,
            1e-12
        ));
    }

    #[test]
    fn modulus_domain_errors() {
        let m = Modulus::rho2();
        assert!(m.eval(0.0f64).is_err());
        assert!(m.eval(-0.1f64).is_err());
        assert!(m.eval(1.0001f64).is_err());
        assert!(Modulus::rho_alpha(0.0).is_err());
        assert!(Modulus::rho_alpha(2.5).is_err());
        assert!(Modulus::rho2a(-1.0).is_err());
    }

    #[test]
    fn rho2a_zero_matches_rho_alpha_two() {
        let a = Modulus::rho2();
        let b = Modulus::rho_alpha(2.0).unwrap();
        for k in 1..=10_000 {
            let h = k as f64 / 10_000.0;
            let (x, y) = (a.eval(h).unwrap(), b.eval(h).unwrap());
            assert!((x - y).abs() <= 4.0 * f64::EPSILON * x, "h = {h}");
        }
    }

    #[test]
    fn moduli_strictly_increasing() {
        let moduli = [
            Modulus::rho2(),
            Modulus::rho2a(50.0).unwrap(),
            Modulus::rho2a(1000.0).unwrap(),
            Modulus::rho_alpha(2.0).unwrap(),
        ];
        for m in moduli {
            let mut prev = 0.0;
            for k in 1..=10_000 {
                let v = m.eval(k as f64 / 10_000.0).unwrap();
                assert!(v > prev, "{m} not increasing at k = {k}");
                prev = v;
            }
        }
    }

    // rho_alpha increases exactly on h < exp(1 - 2/alpha); for alpha < 2 it turns down before h = 1.
    #[test]
    fn rho_alpha_below_two_turns_down() {
        for alpha in [0.5, 1.0, 1.5] {
            let m = Modulus::rho_alpha(alpha).unwrap();
            let peak = (1.0 - 2.0 / alpha).exp();
            let at = |h: f64| m.eval(h).unwrap();
            assert!(at(peak * 0.9) < at(peak));
            assert!(at(peak) > at((peak * 1.1).min(1.0)));
            assert!(at(peak) > at(1.0));
        }
    }

    #[test]
    fn modulus_parsing_round_trips() {
        for s in ["rho2a:0", "rho2a:50", "rho_alpha:1.5"] {
            let m: Modulus = s.parse().unwrap();
            assert_eq!(m, m.to_string().parse().unwrap());
        }
        assert_eq!("rho2".parse::<Modulus>().unwrap(), Modulus::rho2());
        assert!("rho3:1".parse::<Modulus>().is_err());
        assert!("rho2a".parse::<Modulus>().is_err());
    }

    #[test]
    fn series_validation() {
        assert!(TimeSeries::new(vec![1.0f64]).is_err());
        assert!(TimeSeries::new(vec![1.0f64, f64::NAN]).is_err());
        assert!(TimeSeries::new(vec![1.0f64, f64::INFINITY]).is_err());
        assert!(TimeSeries::new(vec![1.0f64, 2.0]).is_ok());
    }

    #[test]
    fn prefix_examples() {
        let p = PartialSumProcess::from_values(&[0.0f64; 4]);
        assert_eq!(p.prefix(), &[0.0; 5]);
        let p = PartialSumProcess::from_values(&[1.0f64, -1.0, 1.0, -1.0]);
        assert_eq!(p.prefix(), &[0.0, 1.0, 0.0, 1.0, 0.0]);
        let p = PartialSumProcess::from_values(&[1.0f64, 2.0, 3.0]);
        assert_eq!(p.prefix(), &[0.0, 1.0, 3.0, 6.0]);
    }

    #[test]
    fn eval_examples() {
        let p = PartialSumProcess::from_values(&[1.0f64, -1.0, 1.0, -1.0]);
        assert!(close(p.eval(0.25).unwrap(), 0.5, 1e-15));
        assert!(close(p.eval(0.125).unwrap(), 0.25, 1e-15));
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        assert!(p.eval(-0.1).is_err());
        assert!(p.eval(1.1).is_err());
    }

    #[test]
    fn eval_is_exact_on_lattice() {
        let values: Vec<f64> = (0..97)
            .map(|t| ((t * 37 % 11) as f64 - 5.0) * 0.37)
            .collect();
        let p = PartialSumProcess::from_values(&values);
        let n = values.len();
        for k in 0..=n {
            let v = p.eval(k as f64 / n as f64).unwrap() * (n as f64).sqrt();
            assert!((v - p.prefix()[k]).abs() <= 1e-12 * (1.0 + p.prefix()[k].abs()));
        }
    }

    #[test]
    fn scan_value_examples() {
        let p = PartialSumProcess::from_values(&[2.0f64; 4]);
        assert_eq!(p.scan_value(0, 4).unwrap(), 4.0);
        let p = PartialSumProcess::from_values(&[1.0f64, -1.0, 1.0, -1.0]);
        assert_eq!(p.scan_value(0, 2).unwrap(), 0.0);
        assert_eq!(p.scan_value(0, 1).unwrap(), 1.0);
        assert!(p.scan_value(2, 2).is_err());
        assert!(p.scan_value(0, 5).is_err());
    }

    #[test]
    fn scan_value_sign_and_scale() {
        let y = [0.3f64, -1.2, 2.5, 0.7, -0.1];
        let p = PartialSumProcess::from_values(&y);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let scaled: Vec<f64> = y.iter().map(|v| 3.5 * v).collect();
        let pn = PartialSumProcess::from_values(&neg);
        let ps = PartialSumProcess::from_values(&scaled);
        for i in 0..5 {
            for j in i + 1..=5 {
                let base = p.scan_value(i, j).unwrap();
                assert!((pn.scan_value(i, j).unwrap() - base).abs() < 1e-14);
                assert!((ps.scan_value(i, j).unwrap() - 3.5 * base).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn f32_process_works() {
        let p = PartialSumProcess::from_values(&[1.0f32, 2.0, 3.0]);
        assert_eq!(p.prefix(), &[0.0f32, 1.0, 3.0, 6.0]);
        let m = Modulus::rho2();
        assert!((m.eval(0.25f32).unwrap() - 0.772_381_8).abs() < 1e-6);
    }
}
