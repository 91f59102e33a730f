//! Critical values: Monte-Carlo quantiles of `|B|_{rho, grid}` for standard
//! Brownian motion, the conditional bootstrap for nonstationary noise, and
//! Gaussian-noise thresholds for the SCAN and DS benchmarks.
//!
//! Quantiles use the nearest-rank rule: the `(1 - alpha)` quantile of `M` sorted
//! values is the `ceil((1 - alpha) M)`-th smallest. Replicate `r` draws from
//! [`replicate_rng`]`(seed, r)`, so results do not depend on thread count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grids::{GridKind, IntervalGrid};
use crate::process::{Modulus, ModulusFamily};
use crate::rng::{brownian_prefix, replicate_rng};
use crate::scalar::Scalar;
use crate::statistics::sup::Score;
use crate::statistics::{ds_offsets, scan_weights, seminorm_weights, sup_on_grid};
use crate::variance::VarianceProfile;

/// Levels reported by the shipped tables.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.10, 0.05, 0.01, 0.001, 0.0001];

/// Largest `M * N` accepted by the Brownian simulator.
pub const MAX_SIMULATION_WORK: u128 = 1 << 42;

/// Nearest-rank `(1 - alpha)` quantile of ascending `sorted`.
pub fn nearest_rank(sorted: &[f64], alpha: f64) -> f64 {
    let m = sorted.len();
    // Guard against (1 - alpha) M landing a hair above an integer.
    let rank = (((1.0 - alpha) * m as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(m) - 1]
}

pub(crate) fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput(
            "at least one level alpha is required".into(),
        ));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::Domain(format!("levels must lie in (0, 1), got {a}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusDescriptor {
    pub family: ModulusFamily,
    pub param: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub kind: GridKind,
    pub n_ref: usize,
}

/// Quantiles of `|B|_{rho, grid}` at several levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    pub modulus: ModulusDescriptor,
    pub grid: GridDescriptor,
    #[serde(rename = "M")]
    pub mc_reps: usize,
    #[serde(rename = "N")]
    pub bm_grid_points: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub quantiles: Vec<f64>,
    #[serde(default)]
    pub hash: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl CriticalValueTable {
    pub fn modulus(&self) -> Result<Modulus> {
        Modulus::new(self.modulus.family, self.modulus.param)
    }

    /// Quantile at level `alpha` (matched to 1e-12).
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        self.alphas
            .iter()
            .position(|a| (a - alpha).abs() <= 1e-12)
            .map(|k| self.quantiles[k])
            .ok_or(Error::MissingAlpha(alpha))
    }

    /// Key of the simulation settings; names cache files.
    pub fn cache_key(
        m: &Modulus,
        kind: GridKind,
        n_ref: usize,
        mc_reps: usize,
        points: usize,
        seed: u64,
    ) -> String {
        let text = format!("{}|{}|{}|{}|{}|{}", m, kind, n_ref, mc_reps, points, seed);
        hex(&Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    /// SHA-256 of every field except `hash`.
    pub fn content_hash(&self) -> String {
        let mut body = self.clone();
        body.hash.clear();
        let text = serde_json::to_string(&body).expect("table serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }

    fn seal(mut self) -> Self {
        self.hash = self.content_hash();
        self
    }

    /// Checks the hash and the table invariants.
    pub fn validate(&self) -> Result<()> {
        if self.hash != self.content_hash() {
            return Err(Error::Cache("content hash does not match table".into()));
        }
        if self.alphas.len() != self.quantiles.len() {
            return Err(Error::Cache("alphas and quantiles differ in length".into()));
        }
        check_alphas(&self.alphas).map_err(|e| Error::Cache(e.to_string()))?;
        self.modulus().map_err(|e| Error::Cache(e.to_string()))?;
        let mut order: Vec<usize> = (0..self.alphas.len()).collect();
        order.sort_by(|&a, &b| self.alphas[b].total_cmp(&self.alphas[a]));
        for w in order.windows(2) {
            // Nearest-rank quantiles tie when M * alpha < 1 at both levels.
            if !(self.quantiles[w[1]] >= self.quantiles[w[0]]) {
                return Err(Error::Cache(format!(
                    "quantiles decrease as alpha decreases ({} at {} vs {} at {})",
                    self.quantiles[w[0]],
                    self.alphas[w[0]],
                    self.quantiles[w[1]],
                    self.alphas[w[1]]
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Grid of the given kind at resolution `n`; custom grids need explicit pairs.
pub fn grid_of_kind(kind: GridKind, n: usize) -> Result<IntervalGrid> {
    match kind {
        GridKind::Full => IntervalGrid::full(n),
        GridKind::Dyadic => IntervalGrid::dyadic(n),
        GridKind::Rw => IntervalGrid::rw(n),
        GridKind::Custom => Err(Error::InvalidInput(
            "custom grids have no built-in construction".into(),
        )),
    }
}

/// Per-replicate `|B|_{rho, g}` for several moduli sharing each Brownian path.
/// Returns one vector of `M` values per modulus, in replicate order.
pub fn simulate_brownian_sups(
    moduli: &[Modulus],
    g: &IntervalGrid,
    mc_reps: usize,
    points: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if g.n_ref() != points {
        return Err(Error::ResolutionMismatch {
            grid: g.n_ref(),
            data: points,
        });
    }
    if mc_reps == 0 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    if (mc_reps as u128) * (points as u128) > MAX_SIMULATION_WORK {
        return Err(Error::InvalidInput(format!(
            "M * N = {mc_reps} * {points} exceeds the simulation limit"
        )));
    }
    let weights: Vec<Vec<f64>> = moduli.iter().map(|m| seminorm_weights(m, points)).collect();
    let scores: Vec<Score<'_, f64>> = weights.iter().map(|w| Score::new(w)).collect();
    let rows: Vec<Vec<f64>> = (0..mc_reps as u64)
        .into_par_iter()
        .map_init(Vec::new, |x, r| {
            brownian_prefix(&mut replicate_rng(seed, r), points, x);
            sup_on_grid(x, g, &scores, false)
                .into_iter()
                .map(|b| b.value)
                .collect()
        })
        .collect();
    Ok((0..moduli.len())
        .map(|k| rows.iter().map(|row| row[k]).collect())
        .collect())
}

/// Quantile tables for several moduli from one set of Brownian paths.
pub fn simulate_brownian_tables(
    moduli: &[Modulus],
    g: &IntervalGrid,
    alphas: &[f64],
    mc_reps: usize,
    points: usize,
    seed: u64,
) -> Result<Vec<CriticalValueTable>> {
    check_alphas(alphas)?;
    let sups = simulate_brownian_sups(moduli, g, mc_reps, points, seed)?;
    Ok(moduli
        .iter()
        .zip(sups)
        .map(|(m, mut v)| {
            v.sort_by(f64::total_cmp);
            CriticalValueTable {
                modulus: ModulusDescriptor {
                    family: m.family(),
                    param: m.param(),
                },
                grid: GridDescriptor {
                    kind: g.kind(),
                    n_ref: g.n_ref(),
                },
                mc_reps,
                bm_grid_points: points,
                seed,
                alphas: alphas.to_vec(),
                quantiles: alphas.iter().map(|&a| nearest_rank(&v, a)).collect(),
                hash: String::new(),
            }
            .seal()
        })
        .collect())
}

/// `(1 - alpha)` quantiles of `|B|_{rho, g}` by Monte Carlo.
pub fn simulate_brownian_quantiles(
    m: &Modulus,
    g: &IntervalGrid,
    alphas: &[f64],
    mc_reps: usize,
    points: usize,
    seed: u64,
) -> Result<CriticalValueTable> {
    Ok(simulate_brownian_tables(&[*m], g, alphas, mc_reps, points, seed)?.remove(0))
}

/// Loads the table for these settings from `dir`, simulating and storing it on a miss.
pub fn cached_brownian_quantiles(
    dir: impl AsRef<Path>,
    m: &Modulus,
    kind: GridKind,
    alphas: &[f64],
    mc_reps: usize,
    points: usize,
    seed: u64,
) -> Result<CriticalValueTable> {
    let key = CriticalValueTable::cache_key(m, kind, points, mc_reps, points, seed);
    let path: PathBuf = dir.as_ref().join(format!("quantiles-{key}.json"));
    if path.exists() {
        let t = CriticalValueTable::load(&path)?;
        if alphas.iter().all(|&a| t.quantile(a).is_ok()) {
            return Ok(t);
        }
    }
    std::fs::create_dir_all(dir.as_ref())?;
    let t = simulate_brownian_quantiles(
        m,
        &grid_of_kind(kind, points)?,
        alphas,
        mc_reps,
        points,
        seed,
    )?;
    t.save(&path)?;
    Ok(t)
}

/// Settings of the conditional bootstrap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Pairs with `(j - i)/n <= c_n` are excluded.
    pub c_n: f64,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_n > 0.0 && self.c_n < 1.0) {
            return Err(Error::Domain(format!(
                "c_n must lie in (0, 1), got {}",
                self.c_n
            )));
        }
        if self.reps < 100 {
            return Err(Error::Domain(format!(
                "bootstrap needs at least 100 replicates, got {}",
                self.reps
            )));
        }
        check_alphas(&[self.alpha])
    }

    /// Shortest pair length kept at resolution `n`: the least `d` with `d/n > c_n`.
    pub fn min_len(&self, n: usize) -> usize {
        (self.c_n * n as f64).floor() as usize + 1
    }
}

/// Per-replicate sups of `|W(j/n) - W(i/n)| / rho((j - i)/n)` over pairs of `g`
/// longer than `c_n`, where `W(k/n) = B(Sigma(k/n))` is built from independent
/// Gaussian increments with variances taken from `profile`.
pub fn bootstrap_sups<T: Scalar>(
    profile: &VarianceProfile<T>,
    m: &Modulus,
    cfg: &BootstrapConfig,
    g: &IntervalGrid,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = profile.n();
    if g.n_ref() != n {
        return Err(Error::ResolutionMismatch {
            grid: g.n_ref(),
            data: n,
        });
    }
    let g = g.with_min_len(cfg.min_len(n)).map_err(|_| {
        Error::EmptyCandidates(format!("no grid pair is longer than c_n = {}", cfg.c_n))
    })?;
    let sd: Vec<f64> = profile
        .increments()
        .iter()
        .map(|v| {
            let v = v.as_f64();
            if v < 0.0 {
                Err(Error::Internal(format!(
                    "negative bootstrap increment variance {v}"
                )))
            } else {
                Ok(v.sqrt())
            }
        })
        .collect::<Result<_>>()?;
    let w: Vec<f64> = (0..=n)
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                1.0 / m.eval_unchecked(d as f64 / n as f64)
            }
        })
        .collect();
    let scores = [Score::new(&w)];
    Ok((0..cfg.reps as u64)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(n + 1), vec![0.0; n]),
            |(x, z), r| {
                crate::rng::fill_normals(&mut replicate_rng(cfg.seed, r), z);
                x.clear();
                x.push(0.0);
                let mut acc = 0.0;
                for (zk, sk) in z.iter().zip(&sd) {
                    acc += zk * sk;
                    x.push(acc);
                }
                sup_on_grid(x, &g, &scores, false)[0].value
            },
        )
        .collect())
}

/// Conditional bootstrap `(1 - alpha)` quantile.
pub fn bootstrap_quantile<T: Scalar>(
    profile: &VarianceProfile<T>,
    m: &Modulus,
    cfg: &BootstrapConfig,
    g: &IntervalGrid,
) -> Result<f64> {
    let mut v = bootstrap_sups(profile, m, cfg, g)?;
    v.sort_by(f64::total_cmp);
    Ok(nearest_rank(&v, cfg.alpha).max(0.0))
}

/// Benchmark statistics calibrated under Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Scan,
    Ds,
}

/// Per-replicate SCAN or DS statistic (noise scale 1) on iid standard Gaussian
/// noise of length `n`, over pairs of `g` with `j - i >= min_len`.
pub fn benchmark_sups(
    kind: Benchmark,
    n: usize,
    g: &IntervalGrid,
    reps: usize,
    seed: u64,
    min_len: usize,
) -> Result<Vec<f64>> {
    if g.n_ref() != n {
        return Err(Error::ResolutionMismatch {
            grid: g.n_ref(),
            data: n,
        });
    }
    if reps == 0 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    let g = g.with_min_len(min_len.max(1))?;
    let w = scan_weights::<f64>(n);
    let off = ds_offsets::<f64>(n, 1.0);
    let score = match kind {
        Benchmark::Scan => Score::new(&w),
        Benchmark::Ds => Score::with_offset(&w, &off),
    };
    Ok((0..reps as u64)
        .into_par_iter()
        .map_init(Vec::new, |x, r| {
            brownian_prefix(&mut replicate_rng(seed, r), n, x);
            let v = sup_on_grid(x, &g, &[score], false)[0].value;
            match kind {
                Benchmark::Scan => v,
                Benchmark::Ds => v.max(0.0),
            }
        })
        .collect())
}

/// `(1 - alpha)` Monte-Carlo threshold for SCAN or DS under Gaussian noise.
pub fn benchmark_threshold(
    kind: Benchmark,
    n: usize,
    g: &IntervalGrid,
    alpha: f64,
    reps: usize,
    seed: u64,
    min_len: usize,
) -> Result<f64> {
    check_alphas(&[alpha])?;
    let mut v = benchmark_sups(kind, n, g, reps, seed, min_len)?;
    v.sort_by(f64::total_cmp);
    Ok(nearest_rank(&v, alpha))
}

/// Tables shipped with the crate: `rho_{2,a}` for `a` in {0, 50, 100, 500, 1000}
/// on the full, RW and dyadic grids at `N = 10^4`, and on the dyadic grid at
/// `N = 10^6`, each from `M = 10^5` paths.
pub mod builtin {
    use super::CriticalValueTable;
    use crate::grids::GridKind;
    use crate::process::Modulus;

    macro_rules! shipped {
        ($($name:literal),* $(,)?) => {
            &[$(include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/tables/", $name))),*]
        };
    }

    /// Resolution of the default tables.
    pub const DEFAULT_N_REF: usize = 10_000;

    const FILES: &[&str] = shipped![
        "dyadic-rho2a-0-n10000.json",
        "dyadic-rho2a-50-n10000.json",
        "dyadic-rho2a-100-n10000.json",
        "dyadic-rho2a-500-n10000.json",
        "dyadic-rho2a-1000-n10000.json",
        "full-rho2a-0-n10000.json",
        "full-rho2a-50-n10000.json",
        "full-rho2a-100-n10000.json",
        "full-rho2a-500-n10000.json",
        "full-rho2a-1000-n10000.json",
        "rw-rho2a-0-n10000.json",
        "rw-rho2a-50-n10000.json",
        "rw-rho2a-100-n10000.json",
        "rw-rho2a-500-n10000.json",
        "rw-rho2a-1000-n10000.json",
        "dyadic-rho2a-0-n1000000.json",
        "dyadic-rho2a-50-n1000000.json",
        "dyadic-rho2a-100-n1000000.json",
        "dyadic-rho2a-500-n1000000.json",
        "dyadic-rho2a-1000-n1000000.json",
    ];

    /// Every shipped table; each has passed [`CriticalValueTable::validate`].
    pub fn all() -> Vec<CriticalValueTable> {
        FILES
            .iter()
            .map(|text| {
                let t = CriticalValueTable::from_json(text).expect("shipped table parses");
                t.validate().expect("shipped table validates");
                t
            })
            .collect()
    }

    /// Shipped table for `m` on grids of `kind` at [`DEFAULT_N_REF`].
    pub fn table(m: &Modulus, kind: GridKind) -> Option<CriticalValueTable> {
        table_at(m, kind, DEFAULT_N_REF)
    }

    /// Shipped table for `m` on grids of `kind` simulated at `n_ref` points.
    pub fn table_at(m: &Modulus, kind: GridKind, n_ref: usize) -> Option<CriticalValueTable> {
        all().into_iter().find(|t| {
            t.grid.kind == kind && t.grid.n_ref == n_ref && t.modulus().is_ok_and(|tm| tm == *m)
        })
    }

    /// File name used for a table in the shipped set.
    pub fn file_name(t: &CriticalValueTable) -> String {
        format!(
            "{}-{:?}-{}-n{}.json",
            t.grid.kind, t.modulus.family, t.modulus.param, t.grid.n_ref
        )
        .to_lowercase()
    }
}

/// Reference quantiles of `|B|_{rho_{2,a}}` (`10^5` paths on `10^4` points), for
/// comparison with simulated tables. Rows: `a`; columns: levels 10%, 5%, 1%,
/// 0.1%, 0.01%.
pub mod reference {
    use crate::grids::GridKind;

    pub const ALPHAS: [f64; 5] = [0.10, 0.05, 0.01, 0.001, 0.0001];

    const FULL: [(f64, [f64; 5]); 5] = [
        (0.0, [2.384, 2.601, 3.084, 3.695, 4.229]),
        (50.0, [0.641, 0.661, 0.704, 0.758, 0.808]),
        (100.0, [0.468, 0.484, 0.516, 0.559, 0.599]),
        (500.0, [0.216, 0.222, 0.237, 0.256, 0.274]),
        (1000.0, [0.153, 0.158, 0.169, 0.182, 0.191]),
    ];
    const RW: [(f64, [f64; 5]); 5] = [
        (0.0, [2.173, 2.370, 2.824, 3.408, 3.928]),
        (50.0, [0.636, 0.656, 0.700, 0.753, 0.807]),
        (100.0, [0.466, 0.481, 0.513, 0.556, 0.599]),
        (500.0, [0.215, 0.222, 0.236, 0.256, 0.273]),
        (1000.0, [0.153, 0.158, 0.168, 0.181, 0.193]),
    ];
    const DYADIC: [(f64, [f64; 5]); 5] = [
        (0.0, [1.907, 2.118, 2.631, 3.316, 3.904]),
        (50.0, [0.586, 0.606, 0.650, 0.706, 0.761]),
        (100.0, [0.431, 0.446, 0.479, 0.518, 0.557]),
        (500.0, [0.199, 0.206, 0.221, 0.239, 0.254]),
        (1000.0, [0.141, 0.146, 0.156, 0.170, 0.182]),
    ];

    /// Reference quantile for `rho_{2,a}` on the given grid at level `alpha`.
    pub fn quantile(a: f64, kind: GridKind, alpha: f64) -> Option<f64> {
        let rows = match kind {
            GridKind::Full => &FULL,
            GridKind::Rw => &RW,
            GridKind::Dyadic => &DYADIC,
            GridKind::Custom => return None,
        };
        let col = ALPHAS.iter().position(|x| (x - alpha).abs() < 1e-12)?;
        rows.iter().find(|(ra, _)| *ra == a).map(|(_, q)| q[col])
    }
}
