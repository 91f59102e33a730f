//! Replicate-addressable random streams.
//!
//! Replicate `r` of a Monte-Carlo run with seed `s` draws from ChaCha8 keyed by `s`
//! on stream `r`, so each replicate is a pure function of `(s, r)` and parallel
//! runs reproduce sequential ones bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Generator for replicate `r` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Fills `out` with independent standard normals.
pub fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out {
        *v = StandardNormal.sample(rng);
    }
}

/// Brownian path at `k/n`, `k = 0..=n`, in raw units: `x[k] = Z_1 + ... + Z_k`.
/// Dividing by `sqrt(n)` gives `B(k/n)`.
pub fn brownian_prefix(rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<f64>) {
    out.clear();
    out.reserve(n + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        acc += z;
        out.push(acc);
    }
}
