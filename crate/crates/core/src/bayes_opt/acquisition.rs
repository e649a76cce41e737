use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::gp::GpSurrogate;
use super::sampling::shifted_halton;
use super::DIM;

pub const N_CANDIDATES: usize = 2048;
const DEDUP_STEP: f64 = 1e-6;

/// Expected improvement over `j_best` for a maximization problem.
pub fn expected_improvement_at(mu: f64, sigma: f64, j_best: f64) -> f64 {
    if sigma < 1e-12 {
        return 0.0;
    }
    let n = Normal::standard();
    let z = (mu - j_best) / sigma;
    let ei = (mu - j_best) * n.cdf(z) + sigma * n.pdf(z);
    ei.max(0.0)
}

pub fn expected_improvement(gp: &GpSurrogate, theta: &[f64; DIM], j_best: f64) -> f64 {
    let (mu, sigma) = gp.predict(theta);
    expected_improvement_at(mu, sigma, j_best)
}

/// EI argmax over a shifted Halton set seeded by `seed`; the first maximal
/// candidate wins. Never returns an already observed point.
pub fn propose_next(gp: &GpSurrogate, seed: u64) -> [f64; DIM] {
    let j_best = gp.best_observed();
    let candidates = shifted_halton::<DIM>(N_CANDIDATES, seed);
    let mut best = 0;
    let mut best_ei = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let ei = expected_improvement(gp, c, j_best);
        if ei > best_ei {
            best = i;
            best_ei = ei;
        }
    }
    dedup(candidates[best], gp.observations().0)
}

fn dedup(mut t: [f64; DIM], observed: &[[f64; DIM]]) -> [f64; DIM] {
    while observed.contains(&t) {
        for v in t.iter_mut() {
            *v = if *v + DEDUP_STEP <= 1.0 {
                *v + DEDUP_STEP
            } else {
                *v - DEDUP_STEP
            };
        }
    }
    t
}
