//! Simulation harness: noise models, the BLOCKS test signal, realized
//! exponents, type-I error tables and changepoint detection tables.
//!
//! Every output is a pure function of its configuration and seed: replicate `r`
//! draws from [`replicate_rng`]`(seed, r)` whatever the thread schedule.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical_values::{
    bootstrap_sups, check_alphas, grid_of_kind, nearest_rank, BootstrapConfig, CriticalValueTable,
};
use crate::error::{Error, Result};
use crate::grids::{GridKind, IntervalGrid};
use crate::inference::{changepoint_pipeline, NoiseConfig, PipelineConfig};
use crate::process::{Modulus, PartialSumProcess, TimeSeries};
use crate::rng::{brownian_prefix, replicate_rng};
use crate::statistics::sup::Score;
use crate::statistics::{
    ds_offsets, multiscale_statistic, scan_weights, seminorm_weights, sup_on_grid, SignalSpec,
};
use crate::variance::{diff_variance, variance_profile};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Replicate streams at or above this index are reserved for null calibration.
const NULL_STREAM: u64 = 1 << 40;

/// Innovation law and dependence structure of a noise sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseKind {
    /// `N(0, 1)`.
    Gauss,
    /// `U(-sqrt 3, sqrt 3)`.
    Uniform,
    /// `0` with probability `zero_prob`, else `N(0, 1/(1 - zero_prob))`.
    GaussMixture { zero_prob: f64 },
    /// `eta_t = coef * eta_{t-1} + eps_t` with uniform unit-variance `eps`.
    Ar1 { coef: f64 },
    /// `eta_t = a(t/n) eta_{t-1} + s(t/n) eps_t` with `a(u) = coef_slope * u`,
    /// `s(u) = 1 + sd_slope * u` and uniform unit-variance `eps`.
    TvAr1 { coef_slope: f64, sd_slope: f64 },
}

/// Noise sequence `scale * eta_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub scale: f64,
}

impl NoiseModel {
    pub fn gauss() -> Self {
        Self::from(NoiseKind::Gauss)
    }

    pub fn uniform() -> Self {
        Self::from(NoiseKind::Uniform)
    }

    /// Half zeros, half `N(0, 2)` at `zero_prob = 0.5`.
    pub fn mixture(zero_prob: f64) -> Self {
        Self::from(NoiseKind::GaussMixture { zero_prob })
    }

    pub fn ar1(coef: f64) -> Self {
        Self::from(NoiseKind::Ar1 { coef })
    }

    /// `a(u) = 0.3 u`, `s(u) = 1 + u`.
    pub fn tvar1() -> Self {
        Self::from(NoiseKind::TvAr1 {
            coef_slope: 0.3,
            sd_slope: 1.0,
        })
    }

    pub fn scaled(self, scale: f64) -> Self {
        Self { scale, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Domain(format!(
                "noise scale must be positive, got {}",
                self.scale
            )));
        }
        match self.kind {
            NoiseKind::Gauss | NoiseKind::Uniform => Ok(()),
            NoiseKind::GaussMixture { zero_prob } if (0.0..1.0).contains(&zero_prob) => Ok(()),
            NoiseKind::GaussMixture { zero_prob } => Err(Error::Domain(format!(
                "mixture weight must lie in [0, 1), got {zero_prob}"
            ))),
            NoiseKind::Ar1 { coef } if coef.abs() < 1.0 => Ok(()),
            NoiseKind::Ar1 { coef } => Err(Error::Domain(format!(
                "AR coefficient must satisfy |a| < 1, got {coef}"
            ))),
            NoiseKind::TvAr1 {
                coef_slope,
                sd_slope,
            } if coef_slope.abs() < 1.0 && sd_slope > -1.0 && sd_slope.is_finite() => Ok(()),
            NoiseKind::TvAr1 { .. } => Err(Error::Domain(
                "time-varying AR needs |coef_slope| < 1 and sd_slope > -1".into(),
            )),
        }
    }

    /// AR coefficient and innovation scale at rescaled time `u`.
    fn ar_at(&self, u: f64) -> (f64, f64) {
        match self.kind {
            NoiseKind::Ar1 { coef } => (coef, 1.0),
            NoiseKind::TvAr1 {
                coef_slope,
                sd_slope,
            } => (coef_slope * u, 1.0 + sd_slope * u),
            _ => (0.0, 1.0),
        }
    }

    fn max_abs_coef(&self) -> f64 {
        match self.kind {
            NoiseKind::Ar1 { coef } => coef.abs(),
            NoiseKind::TvAr1 { coef_slope, .. } => coef_slope.abs(),
            _ => 0.0,
        }
    }

    /// Steps discarded before `t = 1`: `100 * max(1, ceil(1 / (1 - |a|_max)))`.
    pub fn burn_in(&self) -> usize {
        match self.kind {
            NoiseKind::Ar1 { .. } | NoiseKind::TvAr1 { .. } => {
                100 * ((1.0 / (1.0 - self.max_abs_coef())).ceil() as usize).max(1)
            }
            _ => 0,
        }
    }

    /// Marginal variance of the frozen process at rescaled time `u`.
    pub fn local_variance(&self, u: f64) -> f64 {
        let (a, s) = self.ar_at(u);
        self.scale * self.scale * s * s / (1.0 - a * a)
    }

    /// Long-run variance of the frozen process at rescaled time `u`.
    pub fn long_run_variance(&self, u: f64) -> f64 {
        let (a, s) = self.ar_at(u);
        self.scale * self.scale * s * s / ((1.0 - a) * (1.0 - a))
    }

    fn innovation(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.kind {
            NoiseKind::Gauss => StandardNormal.sample(rng),
            NoiseKind::GaussMixture { zero_prob } => {
                if rng.random_bool(zero_prob) {
                    0.0
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    z / (1.0 - zero_prob).sqrt()
                }
            }
            NoiseKind::Uniform | NoiseKind::Ar1 { .. } | NoiseKind::TvAr1 { .. } => {
                rng.random_range(-SQRT3..SQRT3)
            }
        }
    }

    /// Overwrites `out` with one noise path of length `out.len()`.
    pub fn fill(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let n = out.len();
        match self.kind {
            NoiseKind::Gauss | NoiseKind::Uniform | NoiseKind::GaussMixture { .. } => {
                for v in out.iter_mut() {
                    *v = self.scale * self.innovation(rng);
                }
            }
            NoiseKind::Ar1 { .. } | NoiseKind::TvAr1 { .. } => {
                // Burn-in runs with the coefficients frozen at u = 0.
                let (a0, s0) = self.ar_at(0.0);
                let mut eta = 0.0;
                for _ in 0..self.burn_in() {
                    eta = a0 * eta + s0 * self.innovation(rng);
                }
                let nf = n as f64;
                for (t, v) in out.iter_mut().enumerate() {
                    let (a, s) = self.ar_at((t + 1) as f64 / nf);
                    eta = a * eta + s * self.innovation(rng);
                    *v = self.scale * eta;
                }
            }
        }
    }
}

impl From<NoiseKind> for NoiseModel {
    fn from(kind: NoiseKind) -> Self {
        Self { kind, scale: 1.0 }
    }
}

/// Noise path of length `n` from `ChaCha8Rng::seed_from_u64(seed)`.
pub fn gen_noise(model: &NoiseModel, n: usize, seed: u64) -> Result<TimeSeries<f64>> {
    model.validate()?;
    let mut out = vec![0.0; n];
    model.fill(&mut ChaCha8Rng::seed_from_u64(seed), &mut out);
    TimeSeries::new(out)
}

/// Reference length of the BLOCKS signal.
pub const BLOCKS_N: usize = 2048;

/// Change locations of BLOCKS at `n = 2048`: the mean changes between samples
/// `tau` and `tau + 1` (1-based).
pub const BLOCKS_CHANGES: [usize; 11] = [205, 267, 308, 472, 512, 820, 902, 1332, 1557, 1598, 1659];

/// Segment levels of BLOCKS as used in wild binary segmentation benchmarks
/// (the Donoho–Johnstone jumps scaled by 3.66).
pub const BLOCKS_LEVELS: [f64; 12] = [
    0.0, 14.64, -3.66, 7.32, -7.32, 10.98, -4.39, 3.29, 19.03, 7.68, 15.37, 0.0,
];

/// BLOCKS change locations at length `n`: `round(tau * n / 2048)`.
pub fn blocks_changes(n: usize) -> Result<Vec<usize>> {
    if n < 64 {
        return Err(Error::InvalidInput(format!(
            "BLOCKS needs n >= 64, got {n}"
        )));
    }
    Ok(BLOCKS_CHANGES
        .iter()
        .map(|&tau| (tau * n + BLOCKS_N / 2) / BLOCKS_N)
        .collect())
}

/// Piecewise-constant BLOCKS mean of length `n`.
pub fn blocks_signal(n: usize) -> Result<SignalSpec<f64>> {
    let changes = blocks_changes(n)?;
    let mut f = Vec::with_capacity(n);
    let mut seg = 0;
    for t in 1..=n {
        if seg < changes.len() && t > changes[seg] {
            seg += 1;
        }
        f.push(BLOCKS_LEVELS[seg]);
    }
    Ok(SignalSpec::Singleton(f))
}

/// Changes `tau` (between samples `tau` and `tau + 1`, 1-based) of a mean vector.
pub fn change_locations(mean: &[f64]) -> Vec<usize> {
    (1..mean.len())
        .filter(|&k| mean[k] != mean[k - 1])
        .collect()
}

/// Statistic whose 10% test defines the realized exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum ThresholdRule {
    Multiscale { modulus: Modulus },
    Scan,
    Ds,
}

impl std::fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdRule::Multiscale { modulus } => write!(f, "{modulus}"),
            ThresholdRule::Scan => f.write_str("scan"),
            ThresholdRule::Ds => f.write_str("ds"),
        }
    }
}

/// Per-length weights and offsets of a threshold rule on raw partial sums with
/// unit noise scale.
struct RuleScores {
    weight: Vec<f64>,
    offset: Option<Vec<f64>>,
}

impl RuleScores {
    fn new(rule: &ThresholdRule, n: usize) -> Self {
        match rule {
            ThresholdRule::Multiscale { modulus } => Self {
                weight: seminorm_weights(modulus, n),
                offset: None,
            },
            ThresholdRule::Scan => Self {
                weight: scan_weights(n),
                offset: None,
            },
            ThresholdRule::Ds => Self {
                weight: scan_weights(n),
                offset: Some(ds_offsets(n, 1.0)),
            },
        }
    }

    fn stat(&self, x: &[f64], g: &IntervalGrid) -> f64 {
        let score = match &self.offset {
            Some(off) => Score::with_offset(&self.weight, off),
            None => Score::new(&self.weight),
        };
        let v = sup_on_grid(x, g, &[score], false)[0].value;
        if self.offset.is_some() {
            v.max(0.0)
        } else {
            v
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentConfig {
    pub grid: GridKind,
    pub rule: ThresholdRule,
    /// Simulations per power estimate.
    pub reps: usize,
    /// Simulations calibrating the threshold under Gaussian noise.
    pub null_reps: usize,
    pub alpha: f64,
    pub target_power: f64,
    pub bisection_steps: usize,
    pub seed: u64,
}

impl ExponentConfig {
    /// 2000 power simulations on the full grid, `10^4` on sparse grids; level 10%,
    /// power 80%, 15 bisection steps.
    pub fn new(grid: GridKind, rule: ThresholdRule) -> Self {
        let reps = if grid == GridKind::Full { 2000 } else { 10_000 };
        Self {
            grid,
            rule,
            reps,
            null_reps: reps,
            alpha: 0.10,
            target_power: 0.80,
            bisection_steps: 15,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizedExponentResult {
    pub l: usize,
    pub mu_min: f64,
    pub exponent: f64,
    pub reps: usize,
    pub alpha: f64,
    pub threshold: f64,
}

/// `mu^2 l / (2 log(e n / l))`: the squared amplitude relative to the detection
/// boundary `sqrt(2 log(e n / l) / l)`, so 1 is the optimal asymptotic value.
pub fn exponent_of(mu: f64, l: usize, n: usize) -> f64 {
    mu * mu * l as f64 / (2.0 * (1.0 + (n as f64 / l as f64).ln()))
}

/// Power of one threshold rule against boxes of a fixed length at random positions.
/// Replicate `r` uses the same noise and position for every amplitude.
pub struct PowerExperiment {
    n: usize,
    l: usize,
    grid: IntervalGrid,
    scores: RuleScores,
    cfg: ExponentConfig,
    threshold: f64,
}

impl PowerExperiment {
    pub fn new(l: usize, n: usize, cfg: &ExponentConfig) -> Result<Self> {
        if l == 0 || l > n {
            return Err(Error::InvalidInput(format!(
                "signal length must lie in 1..=n, got l = {l}, n = {n}"
            )));
        }
        if cfg.reps == 0 || cfg.null_reps == 0 {
            return Err(Error::InvalidInput("need at least one replicate".into()));
        }
        check_alphas(&[cfg.alpha])?;
        if !(cfg.target_power > 0.0 && cfg.target_power < 1.0) {
            return Err(Error::Domain(format!(
                "target power must lie in (0, 1), got {}",
                cfg.target_power
            )));
        }
        let grid = grid_of_kind(cfg.grid, n)?;
        let scores = RuleScores::new(&cfg.rule, n);
        let mut null: Vec<f64> = (0..cfg.null_reps as u64)
            .into_par_iter()
            .map_init(Vec::new, |x, r| {
                brownian_prefix(&mut replicate_rng(cfg.seed, NULL_STREAM + r), n, x);
                scores.stat(x, &grid)
            })
            .collect();
        null.sort_by(f64::total_cmp);
        let threshold = nearest_rank(&null, cfg.alpha);
        Ok(Self {
            n,
            l,
            grid,
            scores,
            cfg: *cfg,
            threshold,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Fraction of replicates rejecting at amplitude `mu`.
    pub fn power(&self, mu: f64) -> f64 {
        let (n, l) = (self.n, self.l);
        let hits = (0..self.cfg.reps as u64)
            .into_par_iter()
            .map_init(Vec::new, |x, r| {
                let mut rng = replicate_rng(self.cfg.seed, r);
                let start = rng.random_range(0..=n - l);
                brownian_prefix(&mut rng, n, x);
                for (k, v) in x.iter_mut().enumerate().skip(start + 1) {
                    *v += mu * (k - start).min(l) as f64;
                }
                self.scores.stat(x, &self.grid) > self.threshold
            })
            .filter(|&hit| hit)
            .count();
        hits as f64 / self.cfg.reps as f64
    }
}

/// Smallest amplitude with power at least `target_power` at level `alpha`,
/// found by doubling then bisection, and the realized exponent it implies.
pub fn realized_exponent(
    l: usize,
    n: usize,
    cfg: &ExponentConfig,
) -> Result<RealizedExponentResult> {
    let exp = PowerExperiment::new(l, n, cfg)?;
    let mut visited: Vec<(f64, f64)> = Vec::new();
    let mut eval = |mu: f64| {
        let p = exp.power(mu);
        visited.push((mu, p));
        p
    };
    // Start at exponent 1 and double until the power clears 90%.
    let mut hi = (2.0 * (1.0 + (n as f64 / l as f64).ln()) / l as f64).sqrt();
    let mut doublings = 0;
    while eval(hi) <= 0.9 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 40 {
            return Err(Error::BracketFailure(format!(
                "power stays below 90% up to mu = {hi} for l = {l}"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..cfg.bisection_steps {
        let mid = 0.5 * (lo + hi);
        if eval(mid) >= cfg.target_power {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    check_isotonic(&mut visited, cfg.reps)?;
    Ok(RealizedExponentResult {
        l,
        mu_min: hi,
        exponent: exponent_of(hi, l, n),
        reps: cfg.reps,
        alpha: cfg.alpha,
        threshold: exp.threshold(),
    })
}

/// Power must not drop by more than four binomial standard errors as `mu` grows.
fn check_isotonic(visited: &mut [(f64, f64)], reps: usize) -> Result<()> {
    visited.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (0.0, 0.0);
    for &(mu, p) in visited.iter() {
        let se = (best.1 * (1.0 - best.1) / reps as f64)
            .sqrt()
            .max(1.0 / reps as f64);
        if p < best.1 - 4.0 * se {
            return Err(Error::Internal(format!(
                "power {p} at mu = {mu} falls below {} at mu = {}",
                best.1, best.0
            )));
        }
        if p > best.1 {
            best = (mu, p);
        }
    }
    Ok(())
}

/// Noise scale used by the signal test in type-I experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum VarianceRule {
    /// First-difference estimate, iid noise.
    Difference,
    /// `sqrt` of the blocked long-run variance `Sigma(1)`, stationary noise.
    LongRun { window_b: usize },
    /// A known noise scale.
    Known { sigma: f64 },
    /// Conditional bootstrap over the variance profile; no table is used.
    Bootstrap {
        window_b: usize,
        c_n: f64,
        reps: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Type1Config {
    pub grid: GridKind,
    pub modulus: Modulus,
    pub alphas: Vec<f64>,
    pub reps: usize,
    pub rule: VarianceRule,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Type1Result {
    pub n: usize,
    pub alphas: Vec<f64>,
    pub rates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub reps: usize,
}

impl Type1Result {
    pub fn rate(&self, alpha: f64) -> Option<f64> {
        self.alphas
            .iter()
            .position(|&a| (a - alpha).abs() < 1e-12)
            .map(|k| self.rates[k])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,alpha,rate,std_error,reps\n");
        for k in 0..self.alphas.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.n, self.alphas[k], self.rates[k], self.std_errors[k], self.reps
            ));
        }
        s
    }
}

/// Rejection frequencies of the signal test under pure noise, with binomial
/// standard errors. `table` supplies `q_alpha` except under the bootstrap rule.
pub fn type1_table(
    model: &NoiseModel,
    n: usize,
    cfg: &Type1Config,
    table: Option<&CriticalValueTable>,
) -> Result<Type1Result> {
    model.validate()?;
    check_alphas(&cfg.alphas)?;
    if cfg.reps == 0 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    let g = grid_of_kind(cfg.grid, n)?;
    let quantiles: Option<Vec<f64>> = match (cfg.rule, table) {
        (VarianceRule::Bootstrap { .. }, _) => None,
        (_, Some(t)) => {
            if t.modulus()? != cfg.modulus {
                return Err(Error::InvalidInput(
                    "table modulus differs from the test modulus".into(),
                ));
            }
            Some(
                cfg.alphas
                    .iter()
                    .map(|&a| t.quantile(a))
                    .collect::<Result<_>>()?,
            )
        }
        (_, None) => {
            return Err(Error::InvalidInput(
                "this variance rule needs a critical value table".into(),
            ))
        }
    };
    let rows: Vec<Vec<bool>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |y, r| -> Result<Vec<bool>> {
                model.fill(&mut replicate_rng(cfg.seed, r), y);
                let s = TimeSeries::new(y.clone())?;
                let stat =
                    multiscale_statistic(&PartialSumProcess::new(&s), &cfg.modulus, &g)?.value;
                let crit: Vec<f64> = match (&quantiles, cfg.rule) {
                    (Some(q), VarianceRule::Difference) => {
                        let sd = diff_variance(&s)?.sigma();
                        q.iter().map(|v| sd * v).collect()
                    }
                    (Some(q), VarianceRule::LongRun { window_b }) => {
                        let sd = variance_profile(&s, window_b)?.values()[n].sqrt();
                        q.iter().map(|v| sd * v).collect()
                    }
                    (Some(q), VarianceRule::Known { sigma }) => {
                        q.iter().map(|v| sigma * v).collect()
                    }
                    (
                        _,
                        VarianceRule::Bootstrap {
                            window_b,
                            c_n,
                            reps,
                        },
                    ) => {
                        let profile = variance_profile(&s, window_b)?;
                        let boot = BootstrapConfig {
                            c_n,
                            reps,
                            alpha: cfg.alphas[0],
                            seed: derived_seed(cfg.seed, r),
                        };
                        let mut sups = bootstrap_sups(&profile, &cfg.modulus, &boot, &g)?;
                        sups.sort_by(f64::total_cmp);
                        cfg.alphas
                            .iter()
                            .map(|&a| nearest_rank(&sups, a).max(0.0))
                            .collect()
                    }
                    (None, _) => unreachable!("tables are resolved for every non-bootstrap rule"),
                };
                Ok(crit.iter().map(|&c| stat > c).collect())
            },
        )
        .collect::<Result<_>>()?;
    let m = cfg.reps as f64;
    let rates: Vec<f64> = (0..cfg.alphas.len())
        .map(|k| rows.iter().filter(|row| row[k]).count() as f64 / m)
        .collect();
    Ok(Type1Result {
        n,
        alphas: cfg.alphas.clone(),
        std_errors: rates.iter().map(|p| (p * (1.0 - p) / m).sqrt()).collect(),
        rates,
        reps: cfg.reps,
    })
}

/// Independent seed for per-replicate sub-simulations.
fn derived_seed(seed: u64, r: u64) -> u64 {
    let mut rng = replicate_rng(seed ^ 0x5bd1_e995_9e37_79b9, r);
    rng.random()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeRow {
    pub tau: usize,
    /// Fraction of replicates with an interval covering the change.
    pub detection: f64,
    /// Fraction with a covering interval that contains no other change.
    pub isolation: f64,
    /// Mean length of the covering interval given detection; `None` if never detected.
    pub mean_length: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub changes: Vec<ChangeRow>,
    /// Fraction of replicates reporting an interval that contains no change.
    pub false_discovery: f64,
    pub mean_count: f64,
    pub reps: usize,
}

impl DetectionResult {
    pub fn row(&self, tau: usize) -> Option<&ChangeRow> {
        self.changes.iter().find(|c| c.tau == tau)
    }

    /// Changes as columns; rows detection, isolation and mean length.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("measure");
        for c in &self.changes {
            s.push_str(&format!(",{}", c.tau));
        }
        s.push('\n');
        let mut line = |name: &str, f: &dyn Fn(&ChangeRow) -> String| {
            s.push_str(name);
            for c in &self.changes {
                s.push(',');
                s.push_str(&f(c));
            }
            s.push('\n');
        };
        line("detection", &|c| c.detection.to_string());
        line("isolation", &|c| c.isolation.to_string());
        line("mean_length", &|c| {
            c.mean_length.map_or(String::new(), |v| v.to_string())
        });
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub pipeline: PipelineConfig,
    pub reps: usize,
    pub seed: u64,
}

/// Detection, isolation and localization of each change of `signal` by the
/// changepoint pipeline under `model`.
pub fn detection_table(
    signal: &SignalSpec<f64>,
    n: usize,
    model: &NoiseModel,
    cfg: &DetectionConfig,
) -> Result<DetectionResult> {
    model.validate()?;
    if cfg.reps == 0 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    let mean = signal.mean(n)?;
    let changes = change_locations(&mean);
    let k = changes.len();

    struct Outcome {
        covered: Vec<Option<usize>>,
        isolated: Vec<bool>,
        false_discovery: bool,
        count: usize,
    }

    let outcomes: Vec<Outcome> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| -> Result<Outcome> {
            let mut y = vec![0.0; n];
            model.fill(&mut replicate_rng(cfg.seed, r), &mut y);
            for (v, f) in y.iter_mut().zip(&mean) {
                *v += f;
            }
            let mut pc = cfg.pipeline.clone();
            if let NoiseConfig::Nonstationary { seed, .. } = &mut pc.noise {
                *seed = derived_seed(*seed, r);
            }
            let report = changepoint_pipeline(&TimeSeries::new(y)?, &pc)?;
            let mut covered = vec![None; k];
            let mut isolated = vec![false; k];
            let mut false_discovery = false;
            for s in &report.selected {
                let inside: Vec<usize> =
                    (0..k).filter(|&c| s.contains_change(changes[c])).collect();
                false_discovery |= inside.is_empty();
                for &c in &inside {
                    covered[c] = Some(s.len());
                    isolated[c] = inside.len() == 1;
                }
            }
            Ok(Outcome {
                covered,
                isolated,
                false_discovery,
                count: report.selected.len(),
            })
        })
        .collect::<Result<_>>()?;

    let m = cfg.reps as f64;
    let rows = (0..k)
        .map(|c| {
            let lens: Vec<usize> = outcomes.iter().filter_map(|o| o.covered[c]).collect();
            ChangeRow {
                tau: changes[c],
                detection: lens.len() as f64 / m,
                isolation: outcomes.iter().filter(|o| o.isolated[c]).count() as f64 / m,
                mean_length: (!lens.is_empty())
                    .then(|| lens.iter().sum::<usize>() as f64 / lens.len() as f64),
            }
        })
        .collect();
    Ok(DetectionResult {
        changes: rows,
        false_discovery: outcomes.iter().filter(|o| o.false_discovery).count() as f64 / m,
        mean_count: outcomes.iter().map(|o| o.count as f64).sum::<f64>() / m,
        reps: cfg.reps,
    })
}

/// Writes `csv` to `path` and the configuration echo to `path` with `.json` appended.
pub fn write_harness_output<C: Serialize>(
    path: impl AsRef<Path>,
    csv: &str,
    config: &C,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::File::create(path)?.write_all(csv.as_bytes())?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    std::fs::write(sidecar, serde_json::to_string_pretty(config)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical_values::simulate_brownian_quantiles;

    fn mean_var(y: &[f64]) -> (f64, f64) {
        let n = y.len() as f64;
        let m = y.iter().sum::<f64>() / n;
        (
            m,
            y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0),
        )
    }

    #[test]
    fn iid_models_have_unit_variance() {
        for (k, model) in [
            NoiseModel::gauss(),
            NoiseModel::uniform(),
            NoiseModel::mixture(0.5),
        ]
        .iter()
        .enumerate()
        {
            let y = gen_noise(model, 100_000, k as u64).unwrap();
            let (m, v) = mean_var(y.values());
            assert!(m.abs() < 0.02, "{model:?}: mean {m}");
            let tol = if k == 0 { 0.01 } else { 0.02 };
            assert!((v - 1.0).abs() <= tol, "{model:?}: {v}");
        }
    }

    #[test]
    fn mixture_is_half_zeros() {
        let y = gen_noise(&NoiseModel::mixture(0.5), 100_000, 2).unwrap();
        let zeros = y.values().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((zeros - 0.5).abs() < 0.01, "{zeros}");
        let u = gen_noise(&NoiseModel::uniform(), 10_000, 2).unwrap();
        assert!(u.values().iter().all(|v| v.abs() < SQRT3));
    }

    #[test]
    fn generation_is_deterministic() {
        for model in [
            NoiseModel::gauss(),
            NoiseModel::ar1(0.3),
            NoiseModel::tvar1().scaled(5.0),
        ] {
            assert_eq!(
                gen_noise(&model, 500, 9).unwrap(),
                gen_noise(&model, 500, 9).unwrap()
            );
            assert_ne!(
                gen_noise(&model, 500, 9).unwrap(),
                gen_noise(&model, 500, 10).unwrap()
            );
        }
    }

    #[test]
    fn ar1_matches_stationary_variance() {
        let model = NoiseModel::ar1(0.3);
        assert_eq!(model.burn_in(), 200);
        let y = gen_noise(&model, 200_000, 4).unwrap();
        let (_, v) = mean_var(y.values());
        let want = 1.0 / (1.0 - 0.09);
        assert!((v / want - 1.0).abs() < 0.02, "{v} vs {want}");
        assert!((model.long_run_variance(0.5) - 1.0 / 0.49).abs() < 1e-12);
    }

    #[test]
    fn tvar_local_variance_near_one() {
        let model = NoiseModel::tvar1();
        assert!((model.local_variance(1.0) - 4.0 / 0.91).abs() < 1e-12);
        assert!((model.local_variance(1.0) - 4.396).abs() < 1e-3);
        // Local sample variance over u in (0.99, 1] against the frozen formula.
        let n = 2_000_000;
        let y = gen_noise(&model, n, 6).unwrap();
        let tail = &y.values()[n - n / 100..];
        let (_, v) = mean_var(tail);
        let want = (0..tail.len())
            .map(|t| model.local_variance((n - tail.len() + t + 1) as f64 / n as f64))
            .sum::<f64>()
            / tail.len() as f64;
        assert!((v / want - 1.0).abs() < 0.03, "{v} vs {want}");
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(gen_noise(&NoiseModel::ar1(1.0), 10, 0).is_err());
        assert!(gen_noise(&NoiseModel::mixture(1.0), 10, 0).is_err());
        assert!(gen_noise(&NoiseModel::gauss().scaled(0.0), 10, 0).is_err());
    }

    #[test]
    fn blocks_layout() {
        assert_eq!(blocks_changes(2048).unwrap(), BLOCKS_CHANGES.to_vec());
        let f = blocks_signal(2048).unwrap().mean(2048).unwrap();
        assert_eq!(change_locations(&f), BLOCKS_CHANGES.to_vec());
        assert_eq!(f[0], 0.0);
        assert_eq!(f[204], 0.0);
        assert_eq!(f[205], 14.64);
        assert_eq!(f[2047], 0.0);
        let half = blocks_changes(1024).unwrap();
        for (h, t) in half.iter().zip(BLOCKS_CHANGES) {
            assert_eq!(*h, t.div_ceil(2));
        }
        let f = blocks_signal(1024).unwrap().mean(1024).unwrap();
        assert_eq!(change_locations(&f), half);
        assert_eq!(
            change_locations(&blocks_signal(64).unwrap().mean(64).unwrap()).len(),
            11
        );
        assert!(blocks_signal(63).is_err());
    }

    #[test]
    fn exponent_normalization() {
        // Denominator 2 log(e n) = 20.42 at l = 1, n = 10^4.
        let d = 1.0 / exponent_of(1.0, 1, 10_000);
        assert!((d - 20.4207).abs() < 1e-3, "{d}");
        // Equals the squared ratio of the interval's signal to sqrt(2) rho_2(l/n) on the
        // partial-sum scale.
        let (n, l, mu) = (10_000usize, 400usize, 0.3);
        let ratio = mu * l as f64
            / (2f64.sqrt()
                * (n as f64).sqrt()
                * Modulus::rho2().eval(l as f64 / n as f64).unwrap());
        assert!((exponent_of(mu, l, n) - ratio * ratio).abs() < 1e-12);
        assert!((exponent_of((2.0 * (1.0 + 25f64.ln()) / 400.0).sqrt(), l, n) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_power_is_alpha() {
        let mut cfg = ExponentConfig::new(
            GridKind::Dyadic,
            ThresholdRule::Multiscale {
                modulus: Modulus::rho2(),
            },
        );
        cfg.reps = 4000;
        cfg.null_reps = 4000;
        let e = PowerExperiment::new(10, 1000, &cfg).unwrap();
        let p = e.power(0.0);
        assert!(
            (p - 0.1).abs() < 4.0 * (0.09f64 / 4000.0).sqrt() + 0.01,
            "{p}"
        );
        assert!(e.power(3.0) > e.power(1.0));
    }

    #[test]
    fn realized_exponent_bisection() {
        let mut cfg = ExponentConfig::new(GridKind::Dyadic, ThresholdRule::Scan);
        cfg.reps = 300;
        cfg.null_reps = 1000;
        let r = realized_exponent(64, 1024, &cfg).unwrap();
        assert!(
            r.mu_min > 0.0 && r.exponent > 1.0 && r.exponent < 5.0,
            "{r:?}"
        );
        let e = PowerExperiment::new(64, 1024, &cfg).unwrap();
        assert!(e.power(r.mu_min) >= 0.8);
        assert_eq!(realized_exponent(64, 1024, &cfg).unwrap(), r);
        assert!(realized_exponent(0, 1024, &cfg).is_err());
        assert!(realized_exponent(2000, 1024, &cfg).is_err());
    }

    #[test]
    fn type1_gauss_near_nominal() {
        let n = 256;
        let m = Modulus::rho2();
        let t = simulate_brownian_quantiles(
            &m,
            &IntervalGrid::dyadic(n).unwrap(),
            &[0.1, 0.05],
            4000,
            n,
            3,
        )
        .unwrap();
        let cfg = Type1Config {
            grid: GridKind::Dyadic,
            modulus: m,
            alphas: vec![0.1, 0.05],
            reps: 2000,
            rule: VarianceRule::Known { sigma: 1.0 },
            seed: 8,
        };
        let r = type1_table(&NoiseModel::gauss(), n, &cfg, Some(&t)).unwrap();
        for (k, &a) in r.alphas.iter().enumerate() {
            assert!(
                (r.rates[k] - a).abs() < 4.0 * r.std_errors[k] + 0.01,
                "{r:?}"
            );
        }
        assert!(r
            .to_csv()
            .starts_with("n,alpha,rate,std_error,reps\n256,0.1,"));
        assert!(type1_table(&NoiseModel::gauss(), n, &cfg, None).is_err());
    }

    #[test]
    fn noiseless_blocks_fully_detected() {
        let n = 2048;
        let m = Modulus::rho2a(1000.0).unwrap();
        let t = simulate_brownian_quantiles(
            &m,
            &IntervalGrid::dyadic(256).unwrap(),
            &[0.05],
            200,
            256,
            1,
        )
        .unwrap();
        let cfg = DetectionConfig {
            pipeline: PipelineConfig {
                modulus: m,
                alpha: 0.05,
                candidates: crate::inference::CandidateSet::DyadicRw,
                noise: NoiseConfig::Iid { table: t },
            },
            reps: 2,
            seed: 0,
        };
        let tiny = NoiseModel::gauss().scaled(1e-9);
        let r = detection_table(&blocks_signal(n).unwrap(), n, &tiny, &cfg).unwrap();
        for c in &r.changes {
            assert_eq!((c.detection, c.isolation), (1.0, 1.0), "{c:?}");
        }
        assert_eq!(r.false_discovery, 0.0);
        let csv = r.to_csv();
        assert!(csv.starts_with("measure,205,267,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn harness_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_harness_output(&path, "a\n1\n", &serde_json::json!({"seed": 1})).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a\n1\n");
        let side: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.csv.json")).unwrap())
                .unwrap();
        assert_eq!(side["seed"], 1);
    }
}
