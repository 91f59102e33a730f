//! Candidate interval grids.
//!
//! A grid is a set of integer endpoint pairs `(i, j)` with `0 <= i < j <= n_ref`,
//! read as the normalized interval `(i/n_ref, j/n_ref)`. Explicit grids are kept
//! sorted by `(j - i, i)`, which is the canonical evaluation order: scanning in
//! that order with a strict `>` update breaks ties towards the shortest, then
//! leftmost, pair.
//!
//! Continuous endpoints (dyadic and Rivera–Walther constructions) are snapped to
//! the nearest lattice point; exact halves go outwards, so the snapped interval
//! is never narrower than the nearest-rounding alternative.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Full,
    Dyadic,
    Rw,
    Custom,
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridKind::Full => "full",
            GridKind::Dyadic => "dyadic",
            GridKind::Rw => "rw",
            GridKind::Custom => "custom",
        })
    }
}

impl std::str::FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(GridKind::Full),
            "dyadic" => Ok(GridKind::Dyadic),
            "rw" => Ok(GridKind::Rw),
            "custom" => Ok(GridKind::Custom),
            other => Err(Error::InvalidInput(format!(
                "unknown grid kind '{other}', expected full, dyadic, rw or custom"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum PairSet {
    /// Every pair of length at least `min_len`; never materialized.
    All {
        min_len: usize,
    },
    Explicit(Vec<(u32, u32)>),
}

/// Finite set of candidate intervals at a given lattice resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalGrid {
    n_ref: usize,
    kind: GridKind,
    pairs: PairSet,
}

fn check_resolution(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "grid resolution must be at least 2, got {n}"
        )));
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidInput(format!(
            "grid resolution {n} too large"
        )));
    }
    Ok(())
}

fn sort_canonical(pairs: &mut Vec<(u32, u32)>) {
    pairs.sort_unstable_by_key(|&(i, j)| (j - i, i));
    pairs.dedup();
}

/// Left endpoint `num/den` snapped to the lattice, halves rounded down.
fn snap_left(num: u128, den: u128) -> u32 {
    // ceil((2 num - den) / (2 den)), num/den >= 0
    let twice = 2 * num;
    if twice <= den {
        return 0;
    }
    ((twice - den).div_ceil(2 * den)) as u32
}

/// Right endpoint `num/den` snapped to the lattice, halves rounded up.
fn snap_right(num: u128, den: u128) -> u32 {
    ((2 * num + den) / (2 * den)) as u32
}

fn snap_left_f64(x: f64) -> f64 {
    let r = x.round();
    if (x - x.floor() - 0.5).abs() == 0.0 {
        x.floor()
    } else {
        r
    }
}

fn snap_right_f64(x: f64) -> f64 {
    if (x - x.floor() - 0.5).abs() == 0.0 {
        x.ceil()
    } else {
        x.round()
    }
}

impl IntervalGrid {
    /// All pairs `0 <= i < j <= n`.
    pub fn full(n: usize) -> Result<Self> {
        check_resolution(n)?;
        Ok(Self {
            n_ref: n,
            kind: GridKind::Full,
            pairs: PairSet::All { min_len: 1 },
        })
    }

    /// Dyadic grid: for levels `l = 0..=floor(log2 m)` the intervals
    /// `(k 2^-l, (k+2) 2^-l)`, `k = 0..=2^l - 2`, snapped to resolution `m`.
    pub fn dyadic(m: usize) -> Result<Self> {
        check_resolution(m)?;
        let max_level = m.ilog2();
        let mut pairs = Vec::new();
        for l in 0..=max_level {
            let den = 1u128 << l;
            for k in 0..(den.saturating_sub(1)) {
                let i = snap_left(k * m as u128, den);
                let j = snap_right((k + 2) * m as u128, den).min(m as u32);
                if i < j {
                    pairs.push((i, j));
                }
            }
        }
        sort_canonical(&mut pairs);
        Ok(Self {
            n_ref: m,
            kind: GridKind::Dyadic,
            pairs: PairSet::Explicit(pairs),
        })
    }

    /// Rivera–Walther grid: for `l = 1..=floor(log2 m)`, endpoints on the
    /// lattice `delta_l = 2^-l / (6 sqrt l)` with lengths between `2^-l` and
    /// `2^(1-l)`; level 0 contributes `(0, 1)`. Snapped to resolution `m`.
    pub fn rw(m: usize) -> Result<Self> {
        check_resolution(m)?;
        let mf = m as f64;
        let max_level = m.ilog2();
        let mut pairs = vec![(0u32, m as u32)];
        for l in 1..=max_level {
            let s = 6.0 * (l as f64).sqrt();
            let den = (1u64 << l) as f64 * s;
            let kmax = ((1u64 << l) as f64 * s).floor() as u64;
            let span_lo = s.ceil() as u64;
            let span_hi = (2.0 * s).floor() as u64;
            for k in 0..=kmax {
                let left = snap_left_f64((k as f64 * mf) / den);
                for span in span_lo..=span_hi {
                    let j = k + span;
                    if j > kmax {
                        break;
                    }
                    let right = snap_right_f64((j as f64 * mf) / den).min(mf);
                    if left < right {
                        pairs.push((left as u32, right as u32));
                    }
                }
            }
        }
        sort_canonical(&mut pairs);
        Ok(Self {
            n_ref: m,
            kind: GridKind::Rw,
            pairs: PairSet::Explicit(pairs),
        })
    }

    /// Grid from explicit pairs; duplicates are removed.
    pub fn custom(n_ref: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::explicit(n_ref, GridKind::Custom, pairs)
    }

    /// Union of the dyadic and Rivera–Walther grids at resolution `m`.
    pub fn dyadic_rw(m: usize) -> Result<Self> {
        let d = Self::dyadic(m)?;
        let r = Self::rw(m)?;
        Self::explicit(m, GridKind::Custom, d.iter().chain(r.iter()))
    }

    fn explicit(
        n_ref: usize,
        kind: GridKind,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        check_resolution(n_ref)?;
        let mut out = Vec::new();
        for (i, j) in pairs {
            if i >= j || j > n_ref {
                return Err(Error::Index { i, j, n: n_ref });
            }
            out.push((i as u32, j as u32));
        }
        if out.is_empty() {
            return Err(Error::EmptyCandidates("grid has no pairs".into()));
        }
        sort_canonical(&mut out);
        Ok(Self {
            n_ref,
            kind,
            pairs: PairSet::Explicit(out),
        })
    }

    pub fn n_ref(&self) -> usize {
        self.n_ref
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn is_full(&self) -> bool {
        matches!(self.pairs, PairSet::All { .. })
    }

    /// Shortest pair length present.
    pub fn min_len(&self) -> usize {
        match &self.pairs {
            PairSet::All { min_len } => *min_len,
            PairSet::Explicit(p) => p.first().map_or(0, |&(i, j)| (j - i) as usize),
        }
    }

    pub fn len(&self) -> usize {
        match &self.pairs {
            PairSet::All { min_len } => {
                let top = self.n_ref + 1 - min_len;
                top * (top + 1) / 2
            }
            PairSet::Explicit(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored pairs in canonical order, `None` for the implicit full grid.
    pub fn explicit_pairs(&self) -> Option<&[(u32, u32)]> {
        match &self.pairs {
            PairSet::All { .. } => None,
            PairSet::Explicit(p) => Some(p),
        }
    }

    /// Pairs in canonical `(j - i, i)` order.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (usize, usize)> + '_> {
        match &self.pairs {
            PairSet::All { min_len } => {
                let n = self.n_ref;
                Box::new((*min_len..=n).flat_map(move |d| (0..=n - d).map(move |i| (i, i + d))))
            }
            PairSet::Explicit(p) => Box::new(p.iter().map(|&(i, j)| (i as usize, j as usize))),
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        if i >= j || j > self.n_ref {
            return false;
        }
        match &self.pairs {
            PairSet::All { min_len } => j - i >= *min_len,
            PairSet::Explicit(p) => p
                .binary_search_by_key(&(j - i, i), |&(a, b)| ((b - a) as usize, a as usize))
                .is_ok(),
        }
    }

    /// Sub-grid of pairs with `j - i >= min_len`; errors if nothing is left.
    pub fn with_min_len(&self, min_len: usize) -> Result<Self> {
        if let PairSet::All { min_len: cur } = self.pairs {
            if min_len > self.n_ref {
                return Err(Error::EmptyCandidates(format!(
                    "no grid pair has length >= {min_len}"
                )));
            }
            return Ok(Self {
                n_ref: self.n_ref,
                kind: self.kind,
                pairs: PairSet::All {
                    min_len: cur.max(min_len),
                },
            });
        }
        let kept: Vec<(usize, usize)> = self.iter().filter(|&(i, j)| j - i >= min_len).collect();
        if kept.is_empty() {
            return Err(Error::EmptyCandidates(format!(
                "no grid pair has length >= {min_len}"
            )));
        }
        let mut g = Self::explicit(self.n_ref, self.kind, kept)?;
        g.kind = self.kind;
        Ok(g)
    }

    /// Whether some `(u', v')` in the grid satisfies `u' <= u < v <= v'` and
    /// `v' - u' <= K (v - u)`.
    pub fn covers<T: Scalar>(&self, u: T, v: T, k: T) -> Result<bool> {
        if !(u >= T::zero() && u < v && v <= T::one()) {
            return Err(Error::Domain(format!(
                "covering check needs 0 <= u < v <= 1, got u = {u}, v = {v}"
            )));
        }
        if !(k >= T::one()) {
            return Err(Error::Domain(format!(
                "covering factor K must be >= 1, got {k}"
            )));
        }
        let n = T::from_usize_lossy(self.n_ref);
        let at = |i: usize| T::from_usize_lossy(i) / n;
        let budget = k * (v - u);
        match &self.pairs {
            PairSet::All { min_len } => {
                let mut i = (u * n).floor().to_usize().unwrap_or(0).min(self.n_ref);
                if i < self.n_ref && at(i + 1) <= u {
                    i += 1;
                }
                while i > 0 && at(i) > u {
                    i -= 1;
                }
                let mut j = (v * n)
                    .ceil()
                    .to_usize()
                    .unwrap_or(self.n_ref)
                    .min(self.n_ref);
                if j > 0 && at(j - 1) >= v {
                    j -= 1;
                }
                while j < self.n_ref && at(j) < v {
                    j += 1;
                }
                if j - i < *min_len {
                    j = (i + min_len).min(self.n_ref);
                    i = j - min_len;
                }
                Ok(at(j) - at(i) <= budget)
            }
            PairSet::Explicit(p) => Ok(p.iter().any(|&(i, j)| {
                let (a, b) = (at(i as usize), at(j as usize));
                a <= u && v <= b && b - a <= budget
            })),
        }
    }

    /// Reads the text format: a `n_ref=<int>` header, then one `i j` pair per line.
    pub fn read_custom<R: BufRead>(reader: R) -> Result<Self> {
        let mut n_ref = None;
        let mut pairs = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if n_ref.is_none() {
                let value = trimmed.strip_prefix("n_ref=").ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: "expected header 'n_ref=<int>'".into(),
                })?;
                n_ref = Some(value.trim().parse::<usize>().map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("bad n_ref: {e}"),
                })?);
                continue;
            }
            let mut it = trimmed.split_whitespace();
            let mut next = || -> Result<usize> {
                it.next()
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: "expected two integers 'i j'".into(),
                    })?
                    .parse::<usize>()
                    .map_err(|e| Error::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })
            };
            let (i, j) = (next()?, next()?);
            if it.next().is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "trailing tokens after 'i j'".into(),
                });
            }
            pairs.push((i, j));
        }
        let n_ref = n_ref.ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing 'n_ref=<int>' header".into(),
        })?;
        Self::custom(n_ref, pairs)
    }

    pub fn load_custom(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_custom(std::io::BufReader::new(file))
    }

    pub fn write_custom<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n_ref={}", self.n_ref)?;
        for (i, j) in self.iter() {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }
}
