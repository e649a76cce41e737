//! Group fairness metrics over predicted probabilities.
//!
//! Hard metrics threshold the probabilities and are what reports show; soft
//! metrics use the probabilities directly so they can be differentiated
//! during training.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbt::PROB_EPS;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("group a={0} is empty")]
    EmptyGroup(u8),
    #[error("length mismatch: {0} predictions vs {1} sensitive values")]
    LengthMismatch(usize, usize),
    #[error("prediction {0} is not a probability")]
    NotProbability(f64),
    #[error("sensitive value {0} is not binary")]
    NotBinary(u8),
    #[error("input is empty")]
    Empty,
    #[error("AUC undefined: only one label class present")]
    SingleClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hard,
    Soft,
}

/// `Summed` is `Σ_i (p_i/p̄) ln(p_i/p̄)` with no `1/m` factor; `Mean`
/// divides by `m` (the conventional Theil T index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TheilForm {
    #[default]
    Summed,
    Mean,
}

/// Predictions split by a binary sensitive attribute.
#[derive(Debug, Clone, Copy)]
pub struct GroupView<'a> {
    p_hat: &'a [f64],
    a: &'a [u8],
    threshold: f64,
    m0: usize,
    m1: usize,
}

impl<'a> GroupView<'a> {
    pub fn new(p_hat: &'a [f64], a: &'a [u8], threshold: f64) -> Result<Self, MetricError> {
        if p_hat.len() != a.len() {
            return Err(MetricError::LengthMismatch(p_hat.len(), a.len()));
        }
        if let Some(&p) = p_hat.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(MetricError::NotProbability(p));
        }
        if let Some(&v) = a.iter().find(|&&v| v > 1) {
            return Err(MetricError::NotBinary(v));
        }
        let m1 = a.iter().filter(|&&v| v == 1).count();
        let m0 = a.len() - m1;
        if m0 == 0 {
            return Err(MetricError::EmptyGroup(0));
        }
        if m1 == 0 {
            return Err(MetricError::EmptyGroup(1));
        }
        Ok(Self {
            p_hat,
            a,
            threshold,
            m0,
            m1,
        })
    }

    pub fn p_hat(&self) -> &'a [f64] {
        self.p_hat
    }

    pub fn sensitive(&self) -> &'a [u8] {
        self.a
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        (self.m0, self.m1)
    }

    /// Predictions of group `g`, in input order.
    pub fn group(&self, g: u8) -> Vec<f64> {
        self.p_hat
            .iter()
            .zip(self.a)
            .filter(|(_, &a)| a == g)
            .map(|(&p, _)| p)
            .collect()
    }

    /// Positive-prediction rate (hard) or mean probability (soft) of group `g`.
    pub fn rate(&self, g: u8, mode: Mode) -> f64 {
        let n = if g == 0 { self.m0 } else { self.m1 };
        let total: f64 = self
            .p_hat
            .iter()
            .zip(self.a)
            .filter(|(_, &a)| a == g)
            .map(|(&p, _)| match mode {
                Mode::Hard => (p >= self.threshold) as u8 as f64,
                Mode::Soft => p,
            })
            .sum();
        total / n as f64
    }
}

/// Statistical parity difference, group 1 minus group 0.
pub fn spd(v: &GroupView<'_>, mode: Mode) -> f64 {
    v.rate(1, mode) - v.rate(0, mode)
}

/// Theil inequality index of all predictions jointly, after flooring each
/// probability at `PROB_EPS`.
pub fn theil(p_hat: &[f64], form: TheilForm) -> f64 {
    if p_hat.is_empty() {
        return 0.0;
    }
    let m = p_hat.len() as f64;
    let mean = p_hat.iter().map(|&p| p.max(PROB_EPS)).sum::<f64>() / m;
    let summed: f64 = p_hat
        .iter()
        .map(|&p| {
            let r = p.max(PROB_EPS) / mean;
            r * r.ln()
        })
        .sum();
    let summed = summed.max(0.0);
    match form {
        TheilForm::Summed => summed,
        TheilForm::Mean => summed / m,
    }
}

/// Exact 1-Wasserstein distance between two empirical distributions,
/// `∫ |F₁(t) − F₀(t)| dt` over the merged sorted support.
pub fn wasserstein1d(p_group0: &[f64], p_group1: &[f64]) -> Result<f64, MetricError> {
    if p_group0.is_empty() {
        return Err(MetricError::EmptyGroup(0));
    }
    if p_group1.is_empty() {
        return Err(MetricError::EmptyGroup(1));
    }
    let mut s0 = p_group0.to_vec();
    let mut s1 = p_group1.to_vec();
    s0.sort_by(f64::total_cmp);
    s1.sort_by(f64::total_cmp);
    let (n0, n1) = (s0.len() as i128, s1.len() as i128);
    let (mut i, mut j) = (0usize, 0usize);
    // CDF gap kept as the integer |c1·n0 − c0·n1| over n0·n1.
    let mut area = 0.0;
    let mut prev = f64::NEG_INFINITY;
    while i < s0.len() || j < s1.len() {
        let t = match (s0.get(i), s1.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        if prev.is_finite() {
            let gap = (j as i128 * n0 - i as i128 * n1).abs();
            area += gap as f64 * (t - prev);
        }
        while i < s0.len() && s0[i] == t {
            i += 1;
        }
        while j < s1.len() && s1[j] == t {
            j += 1;
        }
        prev = t;
    }
    Ok(area / (n0 * n1) as f64)
}

/// Non-negative weights of the three penalty terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl PenaltyWeights {
    pub const UNIT: Self = Self {
        w1: 1.0,
        w2: 1.0,
        w3: 1.0,
    };

    pub fn new(w1: f64, w2: f64, w3: f64) -> Self {
        Self { w1, w2, w3 }
    }
}

/// Per-term values of the penalty at one model state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTerms {
    pub spd: f64,
    pub theil: f64,
    pub wasserstein: f64,
}

impl PenaltyTerms {
    pub fn compute(v: &GroupView<'_>, mode: Mode, theil_form: TheilForm) -> Self {
        let wasserstein = wasserstein1d(&v.group(0), &v.group(1)).expect("view has both groups");
        Self {
            spd: spd(v, mode),
            theil: theil(v.p_hat(), theil_form),
            wasserstein,
        }
    }

    /// `w1·|SPD| + w2·Theil + w3·W`.
    pub fn combine(&self, w: &PenaltyWeights) -> f64 {
        w.w1 * self.spd.abs() + w.w2 * self.theil + w.w3 * self.wasserstein
    }
}

/// Weighted fairness penalty; SPD enters by absolute value.
pub fn fairness_loss(
    v: &GroupView<'_>,
    w: &PenaltyWeights,
    mode: Mode,
    theil_form: TheilForm,
) -> f64 {
    PenaltyTerms::compute(v, mode, theil_form).combine(w)
}

/// Reporting-mode fairness metrics at one model state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessSnapshot {
    pub spd: f64,
    pub theil: f64,
    pub theil_normalized: f64,
    pub wasserstein: f64,
    pub rate_group0: f64,
    pub rate_group1: f64,
    pub m0: usize,
    pub m1: usize,
}

pub fn snapshot(v: &GroupView<'_>) -> FairnessSnapshot {
    let rate_group0 = v.rate(0, Mode::Hard);
    let rate_group1 = v.rate(1, Mode::Hard);
    let (m0, m1) = v.group_sizes();
    FairnessSnapshot {
        spd: rate_group1 - rate_group0,
        theil: theil(v.p_hat(), TheilForm::Summed),
        theil_normalized: theil(v.p_hat(), TheilForm::Mean),
        wasserstein: wasserstein1d(&v.group(0), &v.group(1)).expect("view has both groups"),
        rate_group0,
        rate_group1,
        m0,
        m1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn view<'a>(p: &'a [f64], a: &'a [u8]) -> GroupView<'a> {
        GroupView::new(p, a, 0.5).unwrap()
    }

    /// Monotone transport with integer masses: each group-0 point carries
    /// `n1` units, each group-1 point `n0` units.
    fn transport_oracle(x0: &[f64], x1: &[f64]) -> f64 {
        let mut s0 = x0.to_vec();
        let mut s1 = x1.to_vec();
        s0.sort_by(f64::total_cmp);
        s1.sort_by(f64::total_cmp);
        let (n0, n1) = (s0.len(), s1.len());
        let mut left0 = vec![n1; n0];
        let mut left1 = vec![n0; n1];
        let (mut i, mut j) = (0, 0);
        let mut cost = 0.0;
        while i < n0 && j < n1 {
            let moved = left0[i].min(left1[j]);
            cost += moved as f64 * (s0[i] - s1[j]).abs();
            left0[i] -= moved;
            left1[j] -= moved;
            if left0[i] == 0 {
                i += 1;
            }
            if left1[j] == 0 {
                j += 1;
            }
        }
        cost / (n0 * n1) as f64
    }

    #[test]
    fn spd_examples() {
        let a = [1, 1, 0, 0];
        assert_eq!(spd(&view(&[0.9, 0.9, 0.1, 0.1], &a), Mode::Hard), 1.0);
        let v = view(&[0.6, 0.4, 0.7, 0.2], &a);
        assert_eq!(spd(&v, Mode::Hard), 0.0);
        assert!((spd(&v, Mode::Soft) - 0.05).abs() < 1e-15);
        let sym = view(&[0.3, 0.8, 0.8, 0.3], &a);
        assert_eq!(spd(&sym, Mode::Hard), 0.0);
        assert_eq!(spd(&sym, Mode::Soft), 0.0);
    }

    #[test]
    fn view_validation() {
        assert_eq!(
            GroupView::new(&[0.5], &[0], 0.5).unwrap_err(),
            MetricError::EmptyGroup(1)
        );
        assert_eq!(
            GroupView::new(&[0.5], &[1], 0.5).unwrap_err(),
            MetricError::EmptyGroup(0)
        );
        assert!(GroupView::new(&[1.5, 0.2], &[0, 1], 0.5).is_err());
        assert!(GroupView::new(&[0.5, 0.2], &[0, 2], 0.5).is_err());
        assert!(GroupView::new(&[0.5], &[0, 1], 0.5).is_err());
    }

    #[test]
    fn theil_examples() {
        assert_eq!(theil(&[0.3, 0.3, 0.3], TheilForm::Summed), 0.0);
        let expect = 0.4 * 0.4f64.ln() + 1.6 * 1.6f64.ln();
        assert!((theil(&[0.2, 0.8], TheilForm::Summed) - expect).abs() < 1e-15);
        assert!((theil(&[0.2, 0.8], TheilForm::Summed) - 0.38549).abs() < 1e-5);
        assert!((theil(&[0.2, 0.8], TheilForm::Mean) - 0.192745).abs() < 1e-5);
        assert!(theil(&[0.0, 0.0], TheilForm::Summed).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein1d(&[0.2, 0.7], &[0.7, 0.2]).unwrap(), 0.0);
        assert_eq!(wasserstein1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1d(&[0.0, 1.0], &[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(
            wasserstein1d(&[], &[0.5]).unwrap_err(),
            MetricError::EmptyGroup(0)
        );
    }

    #[test]
    fn fairness_loss_examples() {
        let a = [1, 1, 0, 0];
        let sym = view(&[0.4, 0.4, 0.4, 0.4], &a);
        assert_eq!(
            fairness_loss(&sym, &PenaltyWeights::UNIT, Mode::Hard, TheilForm::Summed),
            0.0
        );
        let v = view(&[0.9, 0.9, 0.1, 0.1], &a);
        let spd_only = PenaltyWeights::new(1.0, 0.0, 0.0);
        assert_eq!(
            fairness_loss(&v, &spd_only, Mode::Hard, TheilForm::Summed),
            1.0
        );
        let p = [0.0, 1.0, 0.5, 0.5];
        let a2 = [0, 0, 1, 1];
        let w_only = PenaltyWeights::new(0.0, 0.0, 1.0);
        assert_eq!(
            fairness_loss(&view(&p, &a2), &w_only, Mode::Hard, TheilForm::Summed),
            0.5
        );
        assert_eq!(
            fairness_loss(&view(&p, &a2), &w_only, Mode::Soft, TheilForm::Summed),
            0.5
        );
        let reversed = view(&[0.1, 0.1, 0.9, 0.9], &a);
        assert_eq!(
            fairness_loss(&reversed, &spd_only, Mode::Hard, TheilForm::Summed),
            1.0
        );
    }

    #[test]
    fn snapshot_examples() {
        let s = snapshot(&view(&[0.4; 4], &[1, 1, 0, 0]));
        assert_eq!((s.spd, s.theil, s.wasserstein), (0.0, 0.0, 0.0));
        assert_eq!((s.m0, s.m1), (2, 2));
        let s = snapshot(&view(&[0.6, 0.4, 0.7, 0.2], &[1, 1, 0, 0]));
        assert_eq!(s.spd, 0.0);
        assert_eq!(s.spd, s.rate_group1 - s.rate_group0);
        assert!((s.theil_normalized * 4.0 - s.theil).abs() < 1e-15);
    }

    fn probs(max: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..=max)
    }

    proptest! {
        #[test]
        fn wasserstein_matches_transport(x0 in probs(12), x1 in probs(12)) {
            let w = wasserstein1d(&x0, &x1).unwrap();
            prop_assert!((w - transport_oracle(&x0, &x1)).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&w));
        }

        #[test]
        fn wasserstein_symmetric_and_triangle(x in probs(20), y in probs(20), z in probs(20)) {
            let xy = wasserstein1d(&x, &y).unwrap();
            prop_assert!((xy - wasserstein1d(&y, &x).unwrap()).abs() <= 1e-12);
            let xz = wasserstein1d(&x, &z).unwrap();
            let zy = wasserstein1d(&z, &y).unwrap();
            prop_assert!(xy <= xz + zy + 1e-12);
        }

        #[test]
        fn theil_nonnegative_zero_iff_equal(p in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            let t = theil(&p, TheilForm::Summed);
            prop_assert!(t >= 0.0);
            let clamped: Vec<f64> = p.iter().map(|v| v.max(PROB_EPS)).collect();
            let all_equal = clamped.iter().all(|v| (v - clamped[0]).abs() <= 1e-12);
            if all_equal {
                prop_assert!(t < 1e-9);
            } else {
                prop_assert!(t > 0.0);
            }
        }

        #[test]
        fn hard_spd_depends_only_on_indicator(p in prop::collection::vec(0.0f64..=1.0, 4..40), seed in 0u64..100) {
            let a: Vec<u8> = (0..p.len()).map(|i| ((i as u64 + seed) % 2) as u8).collect();
            let v = view(&p, &a);
            // Strictly monotone map fixing 0.5: p ↦ p^k rescaled around the threshold.
            let q: Vec<f64> = p
                .iter()
                .map(|&x| if x >= 0.5 { 0.5 + (x - 0.5).powi(3) * 4.0 } else { 0.5 - (0.5 - x).powi(3) * 4.0 })
                .collect();
            prop_assert_eq!(spd(&v, Mode::Hard), spd(&view(&q, &a), Mode::Hard));
        }

        #[test]
        fn identical_groups_have_zero_penalty(half in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            let mut p = half.clone();
            p.extend(half.iter().rev());
            let a: Vec<u8> = (0..p.len()).map(|i| (i >= half.len()) as u8).collect();
            let v = view(&p, &a);
            let mut w = PenaltyWeights::UNIT;
            w.w2 = 0.0;
            prop_assert!(fairness_loss(&v, &w, Mode::Soft, TheilForm::Mean).abs() <= 1e-12);
            prop_assert_eq!(fairness_loss(&v, &w, Mode::Hard, TheilForm::Mean), 0.0);
        }
    }
}
