//! Seeded synthetic cohorts with an injected group disparity.
//!
//! Layout for `d` features:
//! - `proxy`: `±proxy_separation` by group plus Gaussian noise; no direct
//!   effect on the label, but correlated with `a` at about 0.89.
//! - `f1 .. f{k}`: standard normal signal features driving the label.
//! - for `d ≥ 4`, the last feature is a weak group-shifted nuisance column
//!   with no label effect.
//!
//! Labels follow `logit = β·x + intercept ± group_shift·bias_strength`, the
//! `+` branch for the privileged group `a = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ColumnSpec, Dataset, DatasetError, FeatureColumn, FeatureSchema};
use crate::gbt::sigmoid;

pub const PROXY_FEATURE: &str = "proxy";

/// Generator constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthDesign {
    pub group_share: f64,
    pub proxy_separation: f64,
    pub proxy_noise: f64,
    pub nuisance_shift: f64,
    /// L2 norm of the signal coefficients, i.e. the std of `β·x`.
    pub signal_norm: f64,
    pub intercept: f64,
    /// Logit offset per unit of `bias_strength`, applied with opposite signs
    /// to the two groups.
    pub group_shift: f64,
}

impl Default for SynthDesign {
    fn default() -> Self {
        Self {
            group_share: 0.5,
            proxy_separation: 1.0,
            proxy_noise: 0.5,
            nuisance_shift: 0.3,
            signal_norm: 1.0,
            intercept: 0.0,
            group_shift: 1.0,
        }
    }
}

/// Generator parameters echoed into reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub bias_strength: f64,
    pub seed: u64,
}

pub fn synth_biased(
    m: usize,
    d: usize,
    bias_strength: f64,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    synth_with(&SynthDesign::default(), m, d, bias_strength, seed)
}

pub fn synth_with(
    design: &SynthDesign,
    m: usize,
    d: usize,
    bias_strength: f64,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if m < 100 {
        return Err(DatasetError::InvalidArgument(format!(
            "rows must be at least 100, got {m}"
        )));
    }
    if d < 3 {
        return Err(DatasetError::InvalidArgument(format!(
            "cols must be at least 3, got {d}"
        )));
    }
    if !(bias_strength >= 0.0 && bias_strength.is_finite()) {
        return Err(DatasetError::InvalidArgument(format!(
            "bias_strength must be finite and non-negative, got {bias_strength}"
        )));
    }

    let has_nuisance = d >= 4;
    let n_signal = if has_nuisance { d - 2 } else { d - 1 };
    let raw: Vec<f64> = (1..=n_signal).map(|j| 1.0 / (j as f64).sqrt()).collect();
    let norm = raw.iter().map(|b| b * b).sum::<f64>().sqrt();
    let beta: Vec<f64> = raw.iter().map(|b| b * design.signal_norm / norm).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut columns = vec![Vec::with_capacity(m); d];
    let mut y = Vec::with_capacity(m);
    let mut a = Vec::with_capacity(m);
    for _ in 0..m {
        let group: u8 = rng.random_bool(design.group_share) as u8;
        let sign = if group == 1 { 1.0 } else { -1.0 };
        columns[0].push(
            sign * design.proxy_separation + design.proxy_noise * std_normal.sample(&mut rng),
        );
        let mut logit = design.intercept + sign * design.group_shift * bias_strength;
        for (j, b) in beta.iter().enumerate() {
            let x = std_normal.sample(&mut rng);
            columns[1 + j].push(x);
            logit += b * x;
        }
        if has_nuisance {
            columns[d - 1].push(sign * design.nuisance_shift + std_normal.sample(&mut rng));
        }
        let label = rng.random_bool(sigmoid(logit)) as u8;
        y.push(label);
        a.push(group);
    }

    let specs = std::iter::once(ColumnSpec::continuous(PROXY_FEATURE))
        .chain((1..d).map(|j| ColumnSpec::continuous(format!("f{j}"))))
        .collect();
    let schema = FeatureSchema::new(specs, "outcome", "sex", ["F".into(), "M".into()])?;
    Dataset::new(
        schema,
        columns.into_iter().map(FeatureColumn::Numeric).collect(),
        y,
        a,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(x: &[f64], a: &[u8]) -> f64 {
        let n = x.len() as f64;
        let af: Vec<f64> = a.iter().map(|&v| v as f64).collect();
        let mx = x.iter().sum::<f64>() / n;
        let ma = af.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(&af).map(|(p, q)| (p - mx) * (q - ma)).sum();
        let vx: f64 = x.iter().map(|p| (p - mx).powi(2)).sum();
        let va: f64 = af.iter().map(|q| (q - ma).powi(2)).sum();
        cov / (vx * va).sqrt()
    }

    #[test]
    fn reproducible() {
        let d1 = synth_biased(500, 6, 2.0, 9).unwrap();
        let d2 = synth_biased(500, 6, 2.0, 9).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(d1.content_hash(), d2.content_hash());
        assert_ne!(d1, synth_biased(500, 6, 2.0, 10).unwrap());
    }

    #[test]
    fn proxy_tracks_group() {
        let d = synth_biased(5000, 10, 2.0, 1).unwrap();
        let FeatureColumn::Numeric(proxy) = &d.columns()[0] else {
            panic!()
        };
        assert!(corr(proxy, d.sensitive()).abs() >= 0.8);
        assert_eq!(d.schema().feature_index(PROXY_FEATURE), Some(0));
    }

    #[test]
    fn bias_raises_group_label_gap() {
        let gap = |bias| {
            let d = synth_biased(20000, 5, bias, 3).unwrap();
            let rate = |g| {
                let (n, pos) = d
                    .sensitive()
                    .iter()
                    .zip(d.labels())
                    .filter(|(&a, _)| a == g)
                    .fold((0, 0), |(n, p), (_, &y)| (n + 1, p + y as usize));
                pos as f64 / n as f64
            };
            rate(1) - rate(0)
        };
        assert!(gap(0.0).abs() < 0.03);
        assert!(gap(2.0) > 0.15);
    }

    #[test]
    fn preconditions() {
        assert!(synth_biased(10, 5, 1.0, 0).is_err());
        assert!(synth_biased(200, 2, 1.0, 0).is_err());
        assert!(synth_biased(200, 3, -1.0, 0).is_err());
        assert!(synth_biased(200, 3, 0.0, 0).is_ok());
    }
}
