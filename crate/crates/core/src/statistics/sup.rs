//! Maximum of per-length scores `|x_j - x_i| * weight[j - i] - offset[j - i]` over
//! interval grids.
//!
//! Every statistic in the crate reduces to this form on a prefix-sum path `x`:
//! the multiscale seminorm (`weight = 1 / (sqrt(n) rho(d/n))`, no offset), the scan
//! statistic (`weight = 1 / sqrt(d)`) and the DS statistic (scan weight plus the
//! `sigma sqrt(2 log(en/d))` offset). Several scores may share one pass over the
//! data, which is how the Monte-Carlo tables evaluate many moduli per path.
//!
//! Ties are resolved by the canonical order `(j - i, i)` irrespective of the order
//! in which pairs are visited.

use rayon::prelude::*;

use crate::scalar::Scalar;

/// Per-length score. Both slices are indexed by the pair length `d` and must
/// have length at least `n + 1`.
#[derive(Clone, Copy, Debug)]
pub struct Score<'a, T> {
    pub weight: &'a [T],
    pub offset: Option<&'a [T]>,
}

impl<'a, T: Scalar> Score<'a, T> {
    pub fn new(weight: &'a [T]) -> Self {
        Self {
            weight,
            offset: None,
        }
    }

    pub fn with_offset(weight: &'a [T], offset: &'a [T]) -> Self {
        Self {
            weight,
            offset: Some(offset),
        }
    }

    #[inline]
    fn eval(&self, diff: T, d: usize) -> T {
        let v = diff * self.weight[d];
        match self.offset {
            Some(o) => v - o[d],
            None => v,
        }
    }

    #[inline]
    fn off(&self, d: usize) -> T {
        self.offset.map_or(T::zero(), |o| o[d])
    }
}

/// Running maximum with its attaining pair. `pair == (0, 0)` means nothing seen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Best<T> {
    pub value: T,
    pub pair: (usize, usize),
}

impl<T: Scalar> Best<T> {
    pub fn empty() -> Self {
        Self {
            value: T::neg_infinity(),
            pair: (0, 0),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pair == (0, 0)
    }

    #[inline]
    fn beats(value: T, pair: (usize, usize), than: &Self) -> bool {
        if than.is_empty() || value > than.value {
            return true;
        }
        if value < than.value {
            return false;
        }
        let key = |(i, j): (usize, usize)| (j - i, i);
        key(pair) < key(than.pair)
    }

    #[inline]
    pub fn offer(&mut self, value: T, pair: (usize, usize)) {
        if Self::beats(value, pair, self) {
            self.value = value;
            self.pair = pair;
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        if !other.is_empty() {
            self.offer(other.value, other.pair);
        }
        self
    }
}

/// `max_i |x[i + d] - x[i]|`, written so that the inner loop vectorizes.
pub fn max_abs_diff<T: Scalar>(x: &[T], d: usize) -> T {
    let m = x.len() - d;
    let (a, b) = (&x[..m], &x[d..]);
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (pa, pb) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            let v = (pb[k] - pa[k]).abs();
            acc[k] = if v > acc[k] { v } else { acc[k] };
        }
    }
    let mut best = T::zero();
    for (&u, &v) in ca.remainder().iter().zip(cb.remainder()) {
        let w = (v - u).abs();
        if w > best {
            best = w;
        }
    }
    acc.iter().fold(best, |m, &v| if v > m { v } else { m })
}

/// Leftmost `i` with `|x[i + d] - x[i]| == target`.
fn first_at<T: Scalar>(x: &[T], d: usize, target: T) -> usize {
    (0..x.len() - d)
        .find(|&i| (x[i + d] - x[i]).abs() == target)
        .unwrap_or(0)
}

/// Sup over explicit pairs, sequentially in the given order.
pub fn sup_pairs<T: Scalar>(
    x: &[T],
    pairs: &[(u32, u32)],
    scores: &[Score<'_, T>],
) -> Vec<Best<T>> {
    let mut best = vec![Best::empty(); scores.len()];
    for &(i, j) in pairs {
        let (i, j) = (i as usize, j as usize);
        let diff = (x[j] - x[i]).abs();
        let d = j - i;
        for (b, s) in best.iter_mut().zip(scores) {
            b.offer(s.eval(diff, d), (i, j));
        }
    }
    best
}

const PAR_CHUNK: usize = 1 << 15;

/// [`sup_pairs`] split over the rayon pool; result identical to the sequential one.
pub fn sup_pairs_par<T: Scalar>(
    x: &[T],
    pairs: &[(u32, u32)],
    scores: &[Score<'_, T>],
) -> Vec<Best<T>> {
    if pairs.len() <= PAR_CHUNK {
        return sup_pairs(x, pairs, scores);
    }
    pairs
        .par_chunks(PAR_CHUNK)
        .map(|c| sup_pairs(x, c, scores))
        .reduce(
            || vec![Best::empty(); scores.len()],
            |a, b| a.into_iter().zip(b).map(|(p, q)| p.merge(q)).collect(),
        )
}

/// Range-max / range-min over `x` in O(1) per query.
struct SparseRange<T> {
    max: Vec<Vec<T>>,
    min: Vec<Vec<T>>,
}

impl<T: Scalar> SparseRange<T> {
    fn new(x: &[T]) -> Self {
        let mut max = vec![x.to_vec()];
        let mut min = vec![x.to_vec()];
        let mut w = 1;
        while 2 * w <= x.len() {
            let (pm, pn) = (max.last().unwrap(), min.last().unwrap());
            let len = x.len() + 1 - 2 * w;
            let nm: Vec<T> = (0..len).map(|i| pm[i].max(pm[i + w])).collect();
            let nn: Vec<T> = (0..len).map(|i| pn[i].min(pn[i + w])).collect();
            max.push(nm);
            min.push(nn);
            w *= 2;
        }
        Self { max, min }
    }

    /// `max - min` of `x[a..=b]`.
    #[inline]
    fn range(&self, a: usize, b: usize) -> T {
        let len = b - a + 1;
        let k = len.ilog2() as usize;
        let w = 1 << k;
        let hi = self.max[k][a].max(self.max[k][b + 1 - w]);
        let lo = self.min[k][a].min(self.min[k][b + 1 - w]);
        hi - lo
    }

    /// Largest range over all windows spanning `d` steps; bounds every
    /// `|x_j - x_i|` with `j - i <= d`.
    fn window_range(&self, n: usize, d: usize) -> T {
        let mut r = T::zero();
        for a in 0..=n - d {
            let v = self.range(a, a + d);
            if v > r {
                r = v;
            }
        }
        r
    }
}

/// Sup over the full grid restricted to lengths `d >= min_len`, for several
/// scores at once. `x` has length `n + 1`. Without `want_pair` only the length
/// of the reported pair is meaningful.
///
/// Lengths are visited in blocks; a block is skipped when the largest window
/// range at its top length cannot lift any score above the current maximum.
/// The bound is exact in floating point (`|x_j - x_i| <= max - min` survives
/// rounding), so pruning never changes the result.
pub fn sup_full<T: Scalar>(
    x: &[T],
    min_len: usize,
    scores: &[Score<'_, T>],
    want_pair: bool,
) -> Vec<Best<T>> {
    let n = x.len() - 1;
    let mut best = vec![Best::empty(); scores.len()];
    let min_len = min_len.max(1);
    if min_len > n {
        return best;
    }

    let visit = |d: usize, best: &mut [Best<T>]| {
        let m = max_abs_diff(x, d);
        let mut at = None;
        for (b, s) in best.iter_mut().zip(scores) {
            let v = s.eval(m, d);
            if v >= b.value {
                let i = if want_pair {
                    *at.get_or_insert_with(|| first_at(x, d, m))
                } else {
                    0
                };
                b.offer(v, (i, i + d));
            }
        }
    };

    // Seeds at geometric lengths give a useful floor before pruning starts.
    let mut d = n;
    while d >= min_len {
        visit(d, &mut best);
        d /= 2;
    }

    let table = SparseRange::new(x);
    let total = table.range(0, n);
    // Suffix maxima of weight and minima of offset per score.
    let suffix: Vec<(Vec<T>, Vec<T>)> = scores
        .iter()
        .map(|s| {
            let mut w = vec![T::zero(); n + 2];
            let mut o = vec![T::infinity(); n + 2];
            for d in (1..=n).rev() {
                w[d] = w[d + 1].max(s.weight[d]);
                o[d] = o[d + 1].min(s.off(d));
            }
            (w, o)
        })
        .collect();

    let mut d1 = min_len;
    while d1 <= n {
        let done = scores
            .iter()
            .enumerate()
            .all(|(k, _)| total * suffix[k].0[d1] - suffix[k].1[d1] < best[k].value);
        if done {
            break;
        }
        let d2 = if d1 < 16 { d1 } else { (d1 + d1 / 4).min(n) };
        let r = if d1 == d2 {
            T::infinity()
        } else {
            table.window_range(n, d2)
        };
        for d in d1..=d2 {
            let live = d1 == d2
                || scores
                    .iter()
                    .zip(&best)
                    .any(|(s, b)| s.eval(r, d) >= b.value);
            if live {
                visit(d, &mut best);
            }
        }
        d1 = d2 + 1;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(x: &[f64], min_len: usize, s: &Score<'_, f64>) -> Best<f64> {
        let n = x.len() - 1;
        let mut b = Best::empty();
        for d in min_len..=n {
            for i in 0..=n - d {
                let v = s.eval((x[i + d] - x[i]).abs(), d);
                if v > b.value {
                    b = Best {
                        value: v,
                        pair: (i, i + d),
                    };
                }
            }
        }
        b
    }

    fn path(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut x = vec![0.0];
        for _ in 0..n {
            let step: f64 = rng.random_range(-1.0..1.0);
            x.push(x.last().unwrap() + step);
        }
        x
    }

    #[test]
    fn max_abs_diff_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 2, 7, 8, 9, 33, 100] {
            let x = path(&mut rng, n);
            for d in 1..=n {
                let naive = (0..=n - d)
                    .map(|i| (x[i + d] - x[i]).abs())
                    .fold(0.0, f64::max);
                assert_eq!(max_abs_diff(&x, d), naive);
            }
        }
    }

    #[test]
    fn pruned_full_sup_equals_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..60 {
            let n = 2 + trial * 7;
            let x = path(&mut rng, n);
            let w: Vec<f64> = (0..=n)
                .map(|d| {
                    if d == 0 {
                        0.0
                    } else {
                        1.0 / ((d as f64) * (1.0 + (n as f64 / d as f64).ln())).sqrt()
                    }
                })
                .collect();
            let o: Vec<f64> = (0..=n).map(|d| 0.01 * d as f64).collect();
            let scores = [Score::new(&w), Score::with_offset(&w, &o)];
            for min_len in [1, 3, n / 2 + 1] {
                let got = sup_full(&x, min_len, &scores, true);
                for (g, s) in got.iter().zip(&scores) {
                    let b = brute(&x, min_len, s);
                    assert_eq!(g.value, b.value, "n = {n}, min_len = {min_len}");
                    assert_eq!(g.pair, b.pair, "n = {n}, min_len = {min_len}");
                }
            }
        }
    }

    #[test]
    fn ties_follow_canonical_order() {
        // Every unit step has the same score; the winner is (0, 1).
        let x = [0.0, 1.0, 0.0, 1.0, 0.0];
        let w = [0.0, 1.0, 0.1, 0.1, 0.1];
        let b = sup_full(&x, 1, &[Score::new(&w)], true);
        assert_eq!(b[0].pair, (0, 1));
        let mut reversed: Vec<(u32, u32)> = vec![(3, 4), (2, 3), (1, 2), (0, 1)];
        let p = sup_pairs(&x, &reversed, &[Score::new(&w)]);
        assert_eq!(p[0].pair, (0, 1));
        reversed.reverse();
        assert_eq!(sup_pairs(&x, &reversed, &[Score::new(&w)])[0].pair, (0, 1));
    }

    #[test]
    fn parallel_pairs_match_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 600;
        let x = path(&mut rng, n);
        let pairs: Vec<(u32, u32)> = (1..=n as u32)
            .flat_map(|d| (0..=n as u32 - d).map(move |i| (i, i + d)))
            .collect();
        let w: Vec<f64> = (0..=n).map(|d| 1.0 / (d.max(1) as f64).sqrt()).collect();
        let s = [Score::new(&w)];
        assert_eq!(sup_pairs(&x, &pairs, &s), sup_pairs_par(&x, &pairs, &s));
    }
}
