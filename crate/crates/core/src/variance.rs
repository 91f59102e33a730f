//! Noise-scale estimates: the first-difference variance for iid noise and the
//! blocked long-run variance profile for locally stationary noise.
//!
//! Profile convention (0-based samples `Y_0, ..., Y_{n-1}`, window `b`):
//!
//! ```text
//! z_t = ( b^{-1/2} * sum_{i=0}^{b-1} (Y_{t-i} - Y_{t+1+i}) )^2,   t = b, ..., n - b - 1
//! Sigma(k/n) = (2n)^{-1} * sum_{t=b}^{k-b-1} z_t                    (empty sum = 0)
//! ```
//!
//! and `Sigma` is linear between lattice points.

use std::io::Write;

use crate::error::{Error, Result};
use crate::process::TimeSeries;
use crate::scalar::{CompensatedSum, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceEstimate<T> {
    pub sigma_sq: T,
}

impl<T: Scalar> VarianceEstimate<T> {
    pub fn sigma(&self) -> T {
        self.sigma_sq.sqrt()
    }
}

/// `sum_{t>=2} (Y_t - Y_{t-1})^2 / (2 (n - 1))`.
pub fn diff_variance<T: Scalar>(s: &TimeSeries<T>) -> Result<VarianceEstimate<T>> {
    let y = s.values();
    if y.len() < 2 {
        return Err(Error::InvalidInput(
            "difference variance needs n >= 2".into(),
        ));
    }
    let mut acc = CompensatedSum::new();
    for w in y.windows(2) {
        let d = w[1] - w[0];
        acc.add(d * d);
    }
    let denom = T::lit(2.0) * T::from_usize_lossy(y.len() - 1);
    Ok(VarianceEstimate {
        sigma_sq: acc.value() / denom,
    })
}

/// Default window `ceil(log10(n)^2)`.
pub fn default_window(n: usize) -> usize {
    let l = (n.max(1) as f64).log10();
    ((l * l).ceil() as usize).max(1)
}

/// Cumulative local long-run variance at every lattice point `k/n`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProfile<T> {
    window_b: usize,
    values: Vec<T>,
}

impl<T: Scalar> VarianceProfile<T> {
    pub fn window(&self) -> usize {
        self.window_b
    }

    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    /// `Sigma(k/n)` for `k = 0..=n`.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Profile from precomputed lattice values; must start at 0 and be nondecreasing.
    pub fn from_values(window_b: usize, values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(
                "profile needs at least two lattice points".into(),
            ));
        }
        if values[0] != T::zero() {
            return Err(Error::InvalidInput("profile must start at 0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("profile values must be finite".into()));
        }
        if let Some(k) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput(format!(
                "profile decreases between k = {k} and k = {}",
                k + 1
            )));
        }
        Ok(Self { window_b, values })
    }

    /// `Sigma(u)`, linear between lattice points.
    pub fn eval(&self, u: T) -> Result<T> {
        if !(u >= T::zero() && u <= T::one()) {
            return Err(Error::Domain(format!("profile needs u in [0, 1], got {u}")));
        }
        let n = self.n();
        let x = u * T::from_usize_lossy(n);
        let k = x.floor().to_usize().unwrap_or(0).min(n - 1);
        let frac = x - T::from_usize_lossy(k);
        Ok(self.values[k] + frac * (self.values[k + 1] - self.values[k]))
    }

    /// Variances `Sigma((k+1)/n) - Sigma(k/n)` of the diffusion increments.
    pub fn increments(&self) -> Vec<T> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Writes `k,sigma_hat_sq_cumulative` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,sigma_hat_sq_cumulative")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }
}

/// Blocked long-run variance profile with window `b`; requires `2b + 1 <= n`.
pub fn variance_profile<T: Scalar>(s: &TimeSeries<T>, b: usize) -> Result<VarianceProfile<T>> {
    let y = s.values();
    let n = y.len();
    if b == 0 {
        return Err(Error::InvalidInput(
            "profile window must be at least 1".into(),
        ));
    }
    if 2 * b + 1 > n {
        return Err(Error::InvalidInput(format!(
            "profile window b = {b} too large for n = {n} (need 2b + 1 <= n)"
        )));
    }
    let scale = T::one() / (T::lit(2.0) * T::from_usize_lossy(n) * T::from_usize_lossy(b));
    let mut values = vec![T::zero(); n + 1];
    let mut acc = CompensatedSum::new();
    // Term t enters Sigma(k/n) for k >= t + b + 1.
    for t in b..n - b {
        let mut block = CompensatedSum::new();
        for i in 0..b {
            block.add(y[t - i] - y[t + 1 + i]);
        }
        let v = block.value();
        acc.add(v * v * scale);
        values[t + b + 1] = acc.value();
    }
    // Compensation may step back by an ulp; keep the profile monotone.
    for k in 1..=n {
        if values[k] < values[k - 1] {
            values[k] = values[k - 1];
        }
    }
    Ok(VarianceProfile {
        window_b: b,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn series(y: Vec<f64>) -> TimeSeries<f64> {
        TimeSeries::new(y).unwrap()
    }

    fn gauss(n: usize, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect()
    }

    #[test]
    fn diff_variance_examples() {
        assert_eq!(diff_variance(&series(vec![3.0; 10])).unwrap().sigma_sq, 0.0);
        assert_eq!(
            diff_variance(&series(vec![0.0, 2.0, 0.0, 2.0]))
                .unwrap()
                .sigma_sq,
            2.0
        );
        let y = vec![0.3, -1.2, 4.0, 2.2, 0.1];
        let shifted: Vec<f64> = y.iter().map(|v| v + 100.0).collect();
        let a = diff_variance(&series(y)).unwrap().sigma_sq;
        let b = diff_variance(&series(shifted)).unwrap().sigma_sq;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn diff_variance_consistent_on_gaussian_noise() {
        for seed in 0..10 {
            let v = diff_variance(&series(gauss(100_000, 1.0, seed)))
                .unwrap()
                .sigma_sq;
            assert!((0.98..=1.02).contains(&v), "seed {seed}: {v}");
        }
    }

    #[test]
    fn profile_example() {
        let p = variance_profile(&series(vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]), 1).unwrap();
        assert!((p.values()[6] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.values()[2], 0.0);
        // t = 1 is the first term and enters at k = 3.
        assert!((p.values()[3] - 1.0 / 12.0).abs() < 1e-15);
        assert!(
            (p.eval(0.5 + 1.0 / 12.0).unwrap()
                - p.values()[3]
                - 0.5 * (p.values()[4] - p.values()[3]))
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn constant_series_has_zero_profile() {
        let p = variance_profile(&series(vec![2.5; 40]), 3).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn profile_invariances() {
        let y = gauss(500, 1.0, 3);
        let base = variance_profile(&series(y.clone()), 4).unwrap();
        let moved =
            variance_profile(&series(y.iter().map(|v| 3.0 * v - 7.0).collect()), 4).unwrap();
        for (a, b) in base.values().iter().zip(moved.values()) {
            assert!((9.0 * a - b).abs() <= 1e-12 * b.max(1.0));
        }
        assert!(base.values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn profile_consistent_on_gaussian_noise() {
        let n = 100_000;
        let p = variance_profile(&series(gauss(n, 2.0, 17)), default_window(n)).unwrap();
        let total = p.values()[n];
        assert!((3.6..=4.4).contains(&total), "{total}");
    }

    #[test]
    fn window_errors_and_defaults() {
        assert!(variance_profile(&series(vec![0.0; 6]), 3).is_err());
        assert!(variance_profile(&series(vec![0.0; 6]), 0).is_err());
        assert_eq!(default_window(1000), 9);
        assert_eq!(default_window(2048), 11);
        assert_eq!(default_window(36_000), 21);
    }

    #[test]
    fn csv_export() {
        let p = variance_profile(&series(vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]), 1).unwrap();
        let mut out = Vec::new();
        p.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("k,sigma_hat_sq_cumulative\n0,0\n"));
        assert_eq!(text.lines().count(), 8);
    }

    #[test]
    fn from_values_validates() {
        assert!(VarianceProfile::from_values(1, vec![0.0, 1.0, 0.5]).is_err());
        assert!(VarianceProfile::from_values(1, vec![0.1, 1.0]).is_err());
        assert!(VarianceProfile::from_values(1, vec![0.0, 0.5, 1.0]).is_ok());
    }
}
