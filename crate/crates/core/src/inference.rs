//! Signal discovery, goodness-of-fit, intervals of significance and narrowest
//! significance pursuit (NSP).
//!
//! Intervals are internal half-open pairs `(i, j]` over 0-based sample
//! boundaries, i.e. samples `i+1..=j` in 1-based terms. Two intervals intersect
//! iff they share a sample: `i1 < j2 && i2 < j1`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical_values::{bootstrap_quantile, BootstrapConfig, CriticalValueTable};
use crate::error::{Error, Result};
use crate::grids::IntervalGrid;
use crate::process::{Modulus, PartialSumProcess, TimeSeries};
use crate::scalar::Scalar;
use crate::statistics::{
    constant_class_exceeds, constant_class_fit, constant_class_statistic, gof_statistic_singleton,
    multiscale_statistic, seminorm_weights, InnerPairs, ShortIntervalDecisions, SignalSpec,
    EXACT_INNER_MAX,
};
use crate::variance::{diff_variance, variance_profile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Iid,
    Nonstationary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    pub statistic: f64,
    pub critical: f64,
    pub reject: bool,
    pub alpha: f64,
    pub noise_mode: NoiseMode,
}

impl TestDecision {
    fn new(statistic: f64, critical: f64, alpha: f64, noise_mode: NoiseMode) -> Self {
        Self {
            statistic,
            critical,
            reject: statistic > critical,
            alpha,
            noise_mode,
        }
    }
}

fn check_table_modulus(table: &CriticalValueTable, m: &Modulus) -> Result<()> {
    let tm = table.modulus()?;
    if tm != *m {
        return Err(Error::InvalidInput(format!(
            "critical value table is for {tm}, statistic uses {m}"
        )));
    }
    Ok(())
}

/// Rejects "no signal" when `|S|_{rho, g} > sigma_hat * q_alpha`.
pub fn signal_test<T: Scalar>(
    s: &TimeSeries<T>,
    m: &Modulus,
    g: &IntervalGrid,
    table: &CriticalValueTable,
    alpha: f64,
) -> Result<TestDecision> {
    check_table_modulus(table, m)?;
    let q = table.quantile(alpha)?;
    let stat = multiscale_statistic(&PartialSumProcess::new(s), m, g)?
        .value
        .as_f64();
    let sigma = diff_variance(s)?.sigma().as_f64();
    Ok(TestDecision::new(stat, sigma * q, alpha, NoiseMode::Iid))
}

/// Signal test with the bootstrap critical value over the blocked variance profile.
pub fn signal_test_nonstationary<T: Scalar>(
    s: &TimeSeries<T>,
    m: &Modulus,
    g: &IntervalGrid,
    window_b: usize,
    boot: &BootstrapConfig,
) -> Result<TestDecision> {
    let stat = multiscale_statistic(&PartialSumProcess::new(s), m, g)?
        .value
        .as_f64();
    let profile = variance_profile(s, window_b)?;
    let crit = bootstrap_quantile(&profile, m, boot, g)?;
    Ok(TestDecision::new(
        stat,
        crit,
        boot.alpha,
        NoiseMode::Nonstationary,
    ))
}

/// Composite null of a goodness-of-fit test.
#[derive(Clone, Debug, PartialEq)]
pub enum GofNull<T> {
    Signal(SignalSpec<T>),
    Constant,
}

/// Goodness-of-fit test. The constant class is fitted on `(0, n]` over the
/// pairs of `g`.
pub fn gof_test<T: Scalar>(
    s: &TimeSeries<T>,
    null: &GofNull<T>,
    m: &Modulus,
    g: &IntervalGrid,
    table: &CriticalValueTable,
    alpha: f64,
) -> Result<TestDecision> {
    check_table_modulus(table, m)?;
    let q = table.quantile(alpha)?;
    let stat = match null {
        GofNull::Signal(f0) => gof_statistic_singleton(s, f0, m, g)?.value,
        GofNull::Constant => {
            let p = PartialSumProcess::new(s);
            constant_class_statistic(&p, (0, s.len()), m, InnerPairs::Grid(g))?
        }
    };
    let sigma = diff_variance(s)?.sigma().as_f64();
    Ok(TestDecision::new(
        stat.as_f64(),
        sigma * q,
        alpha,
        NoiseMode::Iid,
    ))
}

/// Candidate interval whose constant-class statistic exceeds the critical value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificantInterval {
    pub i: usize,
    pub j: usize,
    pub stat: f64,
    pub critical: f64,
}

impl SignificantInterval {
    pub fn len(&self) -> usize {
        self.j - self.i
    }

    pub fn is_empty(&self) -> bool {
        self.j == self.i
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.i < other.j && other.i < self.j
    }

    /// Whether a change between samples `tau` and `tau + 1` (1-based) lies inside.
    pub fn contains_change(&self, tau: usize) -> bool {
        self.i < tau && tau < self.j
    }
}

/// Exact significance decisions for candidate intervals, sharing the short-interval
/// table across queries.
struct Decider<'a, T> {
    p: &'a PartialSumProcess<T>,
    weight: Vec<T>,
    crit: T,
    short: ShortIntervalDecisions,
}

impl<'a, T: Scalar> Decider<'a, T> {
    fn new(p: &'a PartialSumProcess<T>, m: &Modulus, crit: f64, longest: usize) -> Self {
        let weight = seminorm_weights::<T>(m, p.n());
        let crit = T::lit(crit);
        let short = ShortIntervalDecisions::new(p, &weight, crit, longest.min(EXACT_INNER_MAX));
        Self {
            p,
            weight,
            crit,
            short,
        }
    }

    fn significant(&self, i: usize, j: usize) -> Result<bool> {
        match self.short.get(i, j) {
            Some(v) => Ok(v),
            None => constant_class_exceeds(self.p, (i, j), &self.weight, self.crit),
        }
    }

    fn interval(
        &self,
        m: &Modulus,
        i: usize,
        j: usize,
        critical: f64,
    ) -> Result<SignificantInterval> {
        let (stat, _) = constant_class_fit(self.p, (i, j), m, InnerPairs::Auto)?;
        Ok(SignificantInterval {
            i,
            j,
            stat: stat.as_f64(),
            critical,
        })
    }
}

/// All candidates with `j - i >= 2` whose constant-class statistic exceeds
/// `critical`, in canonical `(j - i, i)` order.
pub fn significance_intervals<T: Scalar>(
    s: &TimeSeries<T>,
    candidates: &IntervalGrid,
    m: &Modulus,
    critical: f64,
) -> Result<Vec<SignificantInterval>> {
    let p = PartialSumProcess::new(s);
    if candidates.n_ref() != p.n() {
        return Err(Error::ResolutionMismatch {
            grid: candidates.n_ref(),
            data: p.n(),
        });
    }
    let pairs: Vec<(usize, usize)> = candidates.iter().filter(|(i, j)| j - i >= 2).collect();
    let longest = pairs.last().map_or(0, |(i, j)| j - i);
    let dec = Decider::new(&p, m, critical, longest);
    let hits: Vec<Option<SignificantInterval>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if dec.significant(i, j)? {
                dec.interval(m, i, j, critical).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    Ok(hits.into_iter().flatten().collect())
}

/// Disjoint intervals selected so far, keyed by left end.
#[derive(Default)]
struct Selected {
    by_left: BTreeMap<usize, usize>,
}

impl Selected {
    fn blocks(&self, i: usize, j: usize) -> bool {
        // Selected intervals are disjoint, so only the nearest one starting
        // before j can reach into (i, j].
        self.by_left
            .range(..j)
            .next_back()
            .is_some_and(|(_, &r)| r > i)
    }

    fn insert(&mut self, i: usize, j: usize) {
        self.by_left.insert(i, j);
    }
}

/// Narrowest significance pursuit: repeatedly take the shortest remaining
/// interval (leftmost on ties) and discard everything intersecting it.
pub fn nsp(intervals: &[SignificantInterval]) -> Vec<SignificantInterval> {
    let mut order: Vec<&SignificantInterval> = intervals.iter().collect();
    order.sort_by_key(|s| (s.len(), s.i));
    let mut sel = Selected::default();
    let mut out = Vec::new();
    for s in order {
        if !sel.blocks(s.i, s.j) {
            sel.insert(s.i, s.j);
            out.push(*s);
        }
    }
    out
}

/// Candidate family for intervals of significance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSet {
    /// Dyadic and Rivera–Walther pairs at the data resolution.
    DyadicRw,
    Dyadic,
    Rw,
    /// Every pair; limited to `n <= FULL_CANDIDATES_MAX`.
    Full,
}

/// Largest series length for which [`CandidateSet::Full`] is accepted.
pub const FULL_CANDIDATES_MAX: usize = 4096;

impl CandidateSet {
    pub fn grid(&self, n: usize) -> Result<IntervalGrid> {
        match self {
            CandidateSet::DyadicRw => IntervalGrid::dyadic_rw(n),
            CandidateSet::Dyadic => IntervalGrid::dyadic(n),
            CandidateSet::Rw => IntervalGrid::rw(n),
            CandidateSet::Full if n <= FULL_CANDIDATES_MAX => IntervalGrid::full(n),
            CandidateSet::Full => Err(Error::InvalidInput(format!(
                "full candidate enumeration is limited to n <= {FULL_CANDIDATES_MAX}, got {n}"
            ))),
        }
    }
}

/// How the critical value of the pipeline is obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NoiseConfig {
    /// `sigma_hat * q_alpha` with `q_alpha` from a Brownian table.
    Iid { table: CriticalValueTable },
    /// Bootstrap quantile over the blocked variance profile, on the full grid
    /// of pairs longer than `c_n`.
    Nonstationary {
        window_b: usize,
        c_n: f64,
        reps: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub modulus: Modulus,
    pub alpha: f64,
    pub candidates: CandidateSet,
    pub noise: NoiseConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportInterval {
    /// 1-based first sample.
    pub start: usize,
    /// 1-based last sample, inclusive.
    pub end: usize,
    pub stat: f64,
}

/// Pipeline output: NSP-selected intervals of significance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangepointReport {
    pub config: serde_json::Value,
    pub critical: f64,
    pub intervals: Vec<ReportInterval>,
    pub count_lower_bound: usize,
    #[serde(skip)]
    pub selected: Vec<SignificantInterval>,
}

impl ChangepointReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Critical value for the pipeline on series `s`.
pub fn pipeline_critical<T: Scalar>(s: &TimeSeries<T>, cfg: &PipelineConfig) -> Result<f64> {
    match &cfg.noise {
        NoiseConfig::Iid { table } => {
            check_table_modulus(table, &cfg.modulus)?;
            Ok(diff_variance(s)?.sigma().as_f64() * table.quantile(cfg.alpha)?)
        }
        &NoiseConfig::Nonstationary {
            window_b,
            c_n,
            reps,
            seed,
        } => {
            let profile = variance_profile(s, window_b)?;
            let boot = BootstrapConfig {
                c_n,
                reps,
                alpha: cfg.alpha,
                seed,
            };
            bootstrap_quantile(&profile, &cfg.modulus, &boot, &IntervalGrid::full(s.len())?)
        }
    }
}

/// NSP over the intervals of significance of the candidate grid, evaluated
/// lazily: candidates are visited shortest-first and those meeting an interval
/// already selected are never tested, which selects exactly
/// `nsp(significance_intervals(..))`.
pub fn nsp_significant<T: Scalar>(
    s: &TimeSeries<T>,
    candidates: &IntervalGrid,
    m: &Modulus,
    critical: f64,
) -> Result<Vec<SignificantInterval>> {
    let p = PartialSumProcess::new(s);
    if candidates.n_ref() != p.n() {
        return Err(Error::ResolutionMismatch {
            grid: candidates.n_ref(),
            data: p.n(),
        });
    }
    let longest = candidates.iter().map(|(i, j)| j - i).max().unwrap_or(0);
    let dec = Decider::new(&p, m, critical, longest);
    let mut sel = Selected::default();
    let mut out = Vec::new();
    for (i, j) in candidates.iter() {
        if j - i < 2 || sel.blocks(i, j) {
            continue;
        }
        if dec.significant(i, j)? {
            sel.insert(i, j);
            out.push(dec.interval(m, i, j, critical)?);
        }
    }
    Ok(out)
}

/// Intervals of significance for changes in a piecewise-constant mean, reduced
/// by NSP to a disjoint family; its size bounds the number of changes from below.
pub fn changepoint_pipeline<T: Scalar>(
    s: &TimeSeries<T>,
    cfg: &PipelineConfig,
) -> Result<ChangepointReport> {
    let critical = pipeline_critical(s, cfg)?;
    let grid = cfg.candidates.grid(s.len())?;
    let selected = nsp_significant(s, &grid, &cfg.modulus, critical)?;
    Ok(report(cfg, critical, selected))
}

fn report(
    cfg: &PipelineConfig,
    critical: f64,
    mut selected: Vec<SignificantInterval>,
) -> ChangepointReport {
    selected.sort_by_key(|s| s.i);
    let mut config = serde_json::to_value(cfg).expect("config serializes");
    if let Some(noise) = config.get_mut("noise") {
        // Echo the table by its settings, not its contents.
        if let Some(t) = noise.get_mut("table") {
            let keep = ["modulus", "grid", "M", "N", "seed", "hash"];
            if let Some(obj) = t.as_object_mut() {
                obj.retain(|k, _| keep.contains(&k.as_str()));
            }
        }
    }
    ChangepointReport {
        config,
        critical,
        intervals: selected
            .iter()
            .map(|s| ReportInterval {
                start: s.i + 1,
                end: s.j,
                stat: s.stat,
            })
            .collect(),
        count_lower_bound: selected.len(),
        selected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical_values::simulate_brownian_quantiles;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn si(i: usize, j: usize) -> SignificantInterval {
        SignificantInterval {
            i,
            j,
            stat: 1.0,
            critical: 0.0,
        }
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn table(m: &Modulus, n: usize) -> CriticalValueTable {
        simulate_brownian_quantiles(
            m,
            &IntervalGrid::full(n).unwrap(),
            &[0.1, 0.05, 0.01],
            400,
            n,
            1,
        )
        .unwrap()
    }

    #[test]
    fn nsp_examples() {
        assert!(nsp(&[]).is_empty());
        // Closed 1-based [a, b] is the internal pair (a - 1, b).
        let closed = |a: usize, b: usize| si(a - 1, b);
        let out = nsp(&[closed(1, 5), closed(3, 4), closed(10, 12), closed(2, 6)]);
        assert_eq!(out, vec![closed(3, 4), closed(10, 12)]);
        let tie = nsp(&[closed(2, 4), closed(1, 3)]);
        assert_eq!(tie, vec![closed(1, 3)]);
        // Adjacent intervals share no sample.
        assert_eq!(nsp(&[si(0, 4), si(4, 8)]).len(), 2);
    }

    fn nsp_reference(input: &[SignificantInterval]) -> Vec<SignificantInterval> {
        let mut rest: Vec<SignificantInterval> = input.to_vec();
        let mut out = Vec::new();
        while !rest.is_empty() {
            let pick = *rest.iter().min_by_key(|s| (s.len(), s.i)).unwrap();
            out.push(pick);
            rest.retain(|s| !s.intersects(&pick));
        }
        out
    }

    #[test]
    fn nsp_matches_reference_on_random_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let k = rng.random_range(0..25);
            let fam: Vec<SignificantInterval> = (0..k)
                .map(|_| {
                    let i = rng.random_range(0..60);
                    si(i, i + rng.random_range(1..20))
                })
                .collect();
            let out = nsp(&fam);
            assert_eq!(out, nsp_reference(&fam));
            for (a, x) in out.iter().enumerate() {
                assert!(fam.contains(x));
                for y in &out[a + 1..] {
                    assert!(!x.intersects(y));
                    assert!(x.len() <= y.len());
                }
            }
            // Maximality: every input meets some output.
            for x in &fam {
                assert!(out.iter().any(|y| y.intersects(x)));
            }
        }
    }

    #[test]
    fn huge_box_is_detected() {
        let n = 400;
        let mut y = noise(n, 3);
        for v in &mut y[n / 4..n / 2] {
            *v += 1e6;
        }
        let s = TimeSeries::new(y).unwrap();
        let m = Modulus::rho2();
        let d = signal_test(
            &s,
            &m,
            &IntervalGrid::dyadic(n).unwrap(),
            &table(&m, n),
            0.05,
        )
        .unwrap();
        assert!(d.reject && d.statistic > d.critical);
    }

    #[test]
    fn signal_decision_is_scale_and_shift_invariant() {
        let n = 300;
        let m = Modulus::rho2();
        let t = table(&m, n);
        let g = IntervalGrid::dyadic(n).unwrap();
        for seed in 0..20 {
            let y = noise(n, seed);
            let base = signal_test(&TimeSeries::new(y.clone()).unwrap(), &m, &g, &t, 0.1).unwrap();
            let scaled: Vec<f64> = y.iter().map(|v| 4.0 * v).collect();
            let other = signal_test(&TimeSeries::new(scaled).unwrap(), &m, &g, &t, 0.1).unwrap();
            assert_eq!(base.reject, other.reject);
        }
    }

    #[test]
    fn table_must_match_modulus() {
        let m = Modulus::rho2();
        let t = table(&Modulus::rho2a(50.0).unwrap(), 64);
        let s = TimeSeries::new(noise(64, 1)).unwrap();
        assert!(signal_test(&s, &m, &IntervalGrid::dyadic(64).unwrap(), &t, 0.1).is_err());
        let t = table(&m, 64);
        assert!(matches!(
            signal_test(&s, &m, &IntervalGrid::dyadic(64).unwrap(), &t, 0.2),
            Err(Error::MissingAlpha(_))
        ));
    }

    #[test]
    fn gof_cases() {
        let n = 200;
        let m = Modulus::rho2();
        let t = table(&m, n);
        let g = IntervalGrid::full(n).unwrap();
        let y = noise(n, 5);
        let truth = SignalSpec::Zero;
        let s = TimeSeries::new(y.clone()).unwrap();
        let ok = gof_test(&s, &GofNull::Signal(truth), &m, &g, &t, 0.05).unwrap();
        let drift: Vec<f64> = (0..n).map(|k| 0.05 * k as f64).collect();
        let off = gof_test(
            &s,
            &GofNull::Signal(SignalSpec::Singleton(drift)),
            &m,
            &g,
            &t,
            0.05,
        )
        .unwrap();
        assert!(off.reject);
        assert!(off.statistic > ok.statistic);
        let mut steps = y.clone();
        for v in &mut steps[100..] {
            *v += 3.0;
        }
        let c = gof_test(
            &TimeSeries::new(steps).unwrap(),
            &GofNull::Constant,
            &m,
            &g,
            &t,
            0.05,
        )
        .unwrap();
        assert!(c.reject);
    }

    #[test]
    fn constant_series_yields_nothing() {
        let s = TimeSeries::new(vec![1.0; 128]).unwrap();
        let g = IntervalGrid::dyadic_rw(128).unwrap();
        assert!(significance_intervals(&s, &g, &Modulus::rho2(), 0.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn fused_pipeline_equals_nsp_of_all_intervals() {
        let n = 600;
        let m = Modulus::rho2a(50.0).unwrap();
        let g = IntervalGrid::dyadic_rw(n).unwrap();
        for seed in 0..4 {
            let mut y = noise(n, 40 + seed);
            for v in &mut y[200..350] {
                *v += 2.0;
            }
            for v in &mut y[500..] {
                *v -= 1.5;
            }
            let s = TimeSeries::new(y).unwrap();
            let crit = 0.62;
            let all = significance_intervals(&s, &g, &m, crit).unwrap();
            assert!(all.iter().all(|x| x.stat > crit));
            let fused = nsp_significant(&s, &g, &m, crit).unwrap();
            assert_eq!(nsp(&all), fused);
            assert!(!fused.is_empty());
        }
    }

    #[test]
    fn localization_monotone_in_interval() {
        let y = noise(150, 8);
        let p = PartialSumProcess::new(&TimeSeries::new(y).unwrap());
        let m = Modulus::rho2();
        let inner = constant_class_statistic(&p, (30, 90), &m, InnerPairs::All).unwrap();
        let outer = constant_class_statistic(&p, (20, 120), &m, InnerPairs::All).unwrap();
        let global = constant_class_statistic(&p, (0, 150), &m, InnerPairs::All).unwrap();
        assert!(inner <= outer + 1e-9 && outer <= global + 1e-9);
    }

    #[test]
    fn iid_pipeline_reports_disjoint_intervals_around_jump() {
        let n = 1024;
        let m = Modulus::rho2a(50.0).unwrap();
        let t = table(&m, n);
        let cfg = PipelineConfig {
            modulus: m,
            alpha: 0.05,
            candidates: CandidateSet::DyadicRw,
            noise: NoiseConfig::Iid { table: t },
        };
        let mut y = noise(n, 2);
        for v in &mut y[600..] {
            *v += 5.0;
        }
        let r = changepoint_pipeline(&TimeSeries::new(y).unwrap(), &cfg).unwrap();
        assert_eq!(r.count_lower_bound, r.intervals.len());
        assert!(r.selected.iter().any(|s| s.contains_change(600)));
        for w in r.selected.windows(2) {
            assert!(w[0].j <= w[1].i);
        }
        for iv in &r.intervals {
            assert!(iv.stat > r.critical);
        }
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(json["config"]["noise"]["table"]["quantiles"].is_null());
        assert_eq!(json["count_lower_bound"], r.count_lower_bound);
    }

    #[test]
    fn nonstationary_pipeline_runs() {
        let n = 512;
        let cfg = PipelineConfig {
            modulus: Modulus::rho2a(50.0).unwrap(),
            alpha: 0.05,
            candidates: CandidateSet::Dyadic,
            noise: NoiseConfig::Nonstationary {
                window_b: 8,
                c_n: 0.1,
                reps: 200,
                seed: 1,
            },
        };
        let r = changepoint_pipeline(&TimeSeries::new(vec![2.0; n]).unwrap(), &cfg).unwrap();
        assert!(r.intervals.is_empty());
        assert_eq!(r.critical, 0.0);
    }

    #[test]
    fn full_candidates_are_capped() {
        assert!(CandidateSet::Full.grid(FULL_CANDIDATES_MAX + 1).is_err());
        assert!(CandidateSet::Full.grid(100).is_ok());
    }
}
