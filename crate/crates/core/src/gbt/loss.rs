use super::ModelError;

/// Clamp applied to probabilities before logs and ratios.
pub const PROB_EPS: f64 = 1e-12;
/// Floor for per-instance hessians.
pub const HESS_FLOOR: f64 = 1e-12;

/// Logistic function, stable for any finite margin.
#[inline]
pub fn sigmoid(margin: f64) -> f64 {
    if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    }
}

/// `σ'(f) = σ(f)(1 − σ(f))`.
#[inline]
pub fn sigmoid_derivative(margin: f64) -> f64 {
    let p = sigmoid(margin);
    p * (1.0 - p)
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Per-instance gradient `p − y` and hessian `p(1 − p)` of the logistic loss
/// with respect to the margin.
pub fn logloss_grad_hess(p_hat: &[f64], y: &[u8]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    if p_hat.len() != y.len() {
        return Err(ModelError::LengthMismatch {
            expected: y.len(),
            got: p_hat.len(),
        });
    }
    let mut g = Vec::with_capacity(y.len());
    let mut h = Vec::with_capacity(y.len());
    for (&p, &label) in p_hat.iter().zip(y) {
        let p = clamp_prob(p);
        g.push(p - label as f64);
        h.push((p * (1.0 - p)).max(HESS_FLOOR));
    }
    Ok((g, h))
}

/// Mean binary cross-entropy.
pub fn mean_logloss(p_hat: &[f64], y: &[u8]) -> f64 {
    let total: f64 = p_hat
        .iter()
        .zip(y)
        .map(|(&p, &label)| {
            let p = clamp_prob(p);
            if label == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / y.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!(sigmoid(700.0).is_finite());
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!((sigmoid(-2.0) + sigmoid(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grad_hess_examples() {
        let (g, h) = logloss_grad_hess(&[0.5, 0.5, 0.9], &[1, 0, 1]).unwrap();
        assert_eq!(g[0], -0.5);
        assert_eq!(h[0], 0.25);
        assert_eq!(g[1], 0.5);
        assert_eq!(h[1], 0.25);
        assert!((g[2] + 0.1).abs() < 1e-15);
        assert!((h[2] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn hessian_floored_and_lengths_checked() {
        let (_, h) = logloss_grad_hess(&[1.0, 0.0], &[1, 0]).unwrap();
        assert!(h.iter().all(|&v| v >= HESS_FLOOR));
        assert!(matches!(
            logloss_grad_hess(&[0.5], &[1, 0]),
            Err(ModelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn logloss_at_half() {
        assert!((mean_logloss(&[0.5, 0.5], &[0, 1]) - 2f64.ln()).abs() < 1e-15);
    }
}
