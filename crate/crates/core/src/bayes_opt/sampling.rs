//! Space-filling designs in the unit hypercube.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// `n` Halton points in `[0,1)^D` with a seeded Cranley–Patterson shift.
pub fn shifted_halton<const D: usize>(n: usize, seed: u64) -> Vec<[f64; D]> {
    assert!(D <= PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; D] = std::array::from_fn(|_| rng.random::<f64>());
    (1..=n as u64)
        .map(|i| {
            std::array::from_fn(|k| {
                let v = radical_inverse(i, PRIMES[k]) + shift[k];
                v - v.floor()
            })
        })
        .collect()
}

/// Latin hypercube: each axis split into `n` strata, one point per stratum.
pub fn latin_hypercube<const D: usize>(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; D]> {
    let mut pts = vec![[0.0; D]; n];
    for k in 0..D {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            p[k] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}
