//! Gaussian-process regression with a squared-exponential ARD kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BoError, DIM};

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

const LOG_LENGTH: (f64, f64) = (-4.6, 2.3); // ℓ ∈ [0.01, 10]
const LOG_SIGNAL: (f64, f64) = (-3.0, 3.0);
const LOG_NOISE: (f64, f64) = (-13.8, 0.0); // σ_n² ∈ [1e-6, 1]

/// Kernel hyperparameters in standardized-output units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub length_scales: [f64; DIM],
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Hyper {
    fn to_log(self) -> [f64; DIM + 2] {
        let mut v = [0.0; DIM + 2];
        for k in 0..DIM {
            v[k] = self.length_scales[k].ln();
        }
        v[DIM] = self.signal_var.ln();
        v[DIM + 1] = self.noise_var.ln();
        v
    }

    fn from_log(v: &[f64; DIM + 2]) -> Self {
        Self {
            length_scales: std::array::from_fn(|k| v[k].clamp(LOG_LENGTH.0, LOG_LENGTH.1).exp()),
            signal_var: v[DIM].clamp(LOG_SIGNAL.0, LOG_SIGNAL.1).exp(),
            noise_var: v[DIM + 1].clamp(LOG_NOISE.0, LOG_NOISE.1).exp(),
        }
    }

    fn kernel(&self, a: &[f64; DIM], b: &[f64; DIM]) -> f64 {
        let mut s = 0.0;
        for k in 0..DIM {
            let d = (a[k] - b[k]) / self.length_scales[k];
            s += d * d;
        }
        self.signal_var * (-0.5 * s).exp()
    }
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

fn factorize(x: &[[f64; DIM]], y: &DVector<f64>, h: &Hyper) -> Option<Factor> {
    let n = x.len();
    let base = DMatrix::from_fn(n, n, |i, j| {
        h.kernel(&x[i], &x[j]) + if i == j { h.noise_var } else { 0.0 }
    });
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        if let Some(chol) = k.cholesky() {
            let alpha = chol.solve(y);
            return Some(Factor {
                chol,
                alpha,
                jitter,
            });
        }
        jitter *= 10.0;
    }
    None
}

fn log_marginal_likelihood(f: &Factor, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det: f64 = f.chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    -0.5 * y.dot(&f.alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Fitted GP over `(θ, J)` pairs.
pub struct GpSurrogate {
    x: Vec<[f64; DIM]>,
    y_raw: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    hyper: Hyper,
    factor: Factor,
}

impl std::fmt::Debug for GpSurrogate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GpSurrogate")
            .field("n", &self.x.len())
            .field("hyper", &self.hyper)
            .field("jitter", &self.factor.jitter)
            .finish()
    }
}

impl GpSurrogate {
    /// Fits hyperparameters by maximizing the log marginal likelihood: a
    /// fixed grid plus seeded random restarts, each best start refined by
    /// coordinate pattern search in log space.
    pub fn fit(x: &[[f64; DIM]], y: &[f64], seed: u64) -> Result<Self, BoError> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(BoError::InvalidArgument(format!(
                "GP needs at least two aligned observations, got {} inputs and {} outputs",
                x.len(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(BoError::Numerical("non-finite objective value".into()));
        }
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_std));

        let score = |h: &Hyper| factorize(x, &ys, h).map(|f| log_marginal_likelihood(&f, &ys));

        let mut starts: Vec<[f64; DIM + 2]> = Vec::new();
        for &l in &[0.1, 0.3, 1.0] {
            for &s in &[0.5, 1.0, 2.0] {
                for &nz in &[1e-6, 1e-3, 1e-1] {
                    starts.push(
                        Hyper {
                            length_scales: [l; DIM],
                            signal_var: s,
                            noise_var: nz,
                        }
                        .to_log(),
                    );
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..8 {
            let mut v = [0.0; DIM + 2];
            for k in 0..DIM {
                v[k] = rng.random_range(LOG_LENGTH.0..LOG_LENGTH.1);
            }
            v[DIM] = rng.random_range(LOG_SIGNAL.0..LOG_SIGNAL.1);
            v[DIM + 1] = rng.random_range(LOG_NOISE.0..LOG_NOISE.1);
            starts.push(v);
        }

        let mut scored: Vec<([f64; DIM + 2], f64)> = starts
            .into_iter()
            .filter_map(|v| {
                let h = Hyper::from_log(&v);
                score(&h).map(|s| (h.to_log(), s))
            })
            .collect();
        if scored.is_empty() {
            return Err(BoError::SingularKernel);
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));

        let mut best = scored[0];
        for &(start, start_score) in scored.iter().take(3) {
            let (v, s) = pattern_search(start, start_score, &score);
            if s > best.1 {
                best = (v, s);
            }
        }
        let hyper = Hyper::from_log(&best.0);
        let factor = factorize(x, &ys, &hyper).ok_or(BoError::SingularKernel)?;
        Ok(Self {
            x: x.to_vec(),
            y_raw: y.to_vec(),
            y_mean,
            y_std,
            hyper,
            factor,
        })
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn observations(&self) -> (&[[f64; DIM]], &[f64]) {
        (&self.x, &self.y_raw)
    }

    /// Posterior noise standard deviation in objective units.
    pub fn noise_std(&self) -> f64 {
        (self.hyper.noise_var + self.factor.jitter).sqrt() * self.y_std
    }

    pub fn best_observed(&self) -> f64 {
        self.y_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Posterior mean and standard deviation of the latent function at `t`.
    pub fn predict(&self, t: &[f64; DIM]) -> (f64, f64) {
        let ks = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| self.hyper.kernel(xi, t)),
        );
        let mean = ks.dot(&self.factor.alpha);
        let v = self
            .factor
            .chol
            .l()
            .solve_lower_triangular(&ks)
            .expect("cholesky factor is non-singular");
        let var = (self.hyper.signal_var - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_std * mean, self.y_std * var.sqrt())
    }
}

fn pattern_search<F>(start: [f64; DIM + 2], start_score: f64, score: &F) -> ([f64; DIM + 2], f64)
where
    F: Fn(&Hyper) -> Option<f64>,
{
    let bounds = {
        let mut b = [LOG_LENGTH; DIM + 2];
        b[DIM] = LOG_SIGNAL;
        b[DIM + 1] = LOG_NOISE;
        b
    };
    let (mut best, mut best_score) = (start, start_score);
    let mut step = 1.0;
    while step > 0.01 {
        let mut improved = false;
        for k in 0..DIM + 2 {
            for dir in [1.0, -1.0] {
                let mut v = best;
                v[k] = (v[k] + dir * step).clamp(bounds[k].0, bounds[k].1);
                if v[k] == best[k] {
                    continue;
                }
                if let Some(s) = score(&Hyper::from_log(&v)) {
                    if s > best_score {
                        best = v;
                        best_score = s;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, best_score)
}
