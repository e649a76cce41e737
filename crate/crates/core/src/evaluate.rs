//! Predictive-performance metrics.

use serde::{Deserialize, Serialize};

use crate::fairness::MetricError;

/// Rank-based AUC (Mann–Whitney U); tied scores count ½.
pub fn auc_roc(p_hat: &[f64], y: &[u8]) -> Result<f64, MetricError> {
    if p_hat.len() != y.len() {
        return Err(MetricError::LengthMismatch(p_hat.len(), y.len()));
    }
    if let Some(&v) = y.iter().find(|&&v| v > 1) {
        return Err(MetricError::NotBinary(v));
    }
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..p_hat.len()).collect();
    order.sort_by(|&i, &j| p_hat[i].total_cmp(&p_hat[j]));
    // Counted in half-units so the statistic stays an exact integer.
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && p_hat[order[end]] == p_hat[order[start]] {
            end += 1;
        }
        let (mut pos, mut neg) = (0u128, 0u128);
        for &i in &order[start..end] {
            if y[i] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        twice_u += pos * (2 * neg_below + neg);
        neg_below += neg;
        start = end;
    }
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Share of rows with `[p̂ ≥ threshold] == y`.
pub fn accuracy(p_hat: &[f64], y: &[u8], threshold: f64) -> f64 {
    if p_hat.is_empty() {
        return 0.0;
    }
    let hits = p_hat
        .iter()
        .zip(y)
        .filter(|(&p, &t)| (p >= threshold) == (t == 1))
        .count();
    hits as f64 / p_hat.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub auc_roc: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub m: usize,
}

impl EvalResult {
    pub fn compute(p_hat: &[f64], y: &[u8], threshold: f64) -> Result<Self, MetricError> {
        Ok(Self {
            auc_roc: auc_roc(p_hat, y)?,
            accuracy: accuracy(p_hat, y, threshold),
            threshold,
            m: p_hat.len(),
        })
    }
}
