//! Boosting under `L_total = L_log + λ·(w1·|SPD| + w2·Theil + w3·W)`.
//!
//! The penalty uses soft metrics so each term has a per-instance gradient
//! with respect to the margin. Hessians come from the logistic term only.
//! During training the `|·|` kinks of the SPD and W terms are rounded off
//! within `TRAIN_KINK_BAND`, and each penalised round backtracks its step
//! until that rounded `L_total` does not rise.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::fairness::{
    fairness_loss, GroupView, MetricError, Mode, PenaltyTerms, PenaltyWeights, TheilForm,
};
use crate::gbt::{
    boost_with, leaf_value, logloss_grad_hess, mean_logloss, sigmoid, ModelError, RoundObjective,
    TrainConfig, TreeEnsemble, TreeNode, PROB_EPS,
};

/// Penalty strength and term weights, `θ = (λ, w1, w2, w3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessConfig {
    pub lambda: f64,
    pub weights: PenaltyWeights,
    /// Theil variant inside the training penalty. `Mean` keeps the term's
    /// scale independent of cohort size.
    pub theil_form: TheilForm,
}

impl FairnessConfig {
    pub fn new(lambda: f64, w1: f64, w2: f64, w3: f64) -> Self {
        Self {
            lambda,
            weights: PenaltyWeights::new(w1, w2, w3),
            theil_form: TheilForm::Mean,
        }
    }

    /// `λ = 0`: plain logistic boosting.
    pub fn disabled() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let w = &self.weights;
        let ok = [self.lambda, w.w1, w.w2, w.w3]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !ok {
            return Err(ModelError::InvalidConfig(format!(
                "fairness parameters must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Mean logloss plus `λ` times the soft fairness penalty.
pub fn total_loss(
    p_hat: &[f64],
    y: &[u8],
    a: &[u8],
    cfg: &FairnessConfig,
) -> Result<f64, MetricError> {
    if y.len() != p_hat.len() {
        return Err(MetricError::LengthMismatch(p_hat.len(), y.len()));
    }
    let view = GroupView::new(p_hat, a, 0.5)?;
    Ok(mean_logloss(p_hat, y)
        + cfg.lambda * fairness_loss(&view, &cfg.weights, Mode::Soft, cfg.theil_form))
}

/// Per-term margin gradients of the unweighted soft penalty terms.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGradients {
    /// `∂|SPD_soft|/∂f_i`
    pub spd: Vec<f64>,
    /// `∂Theil/∂f_i`
    pub theil: Vec<f64>,
    /// Subgradient of the exact empirical W₁; zero contributions where a
    /// matched pair is tied.
    pub wasserstein: Vec<f64>,
}

impl TermGradients {
    pub fn combine(&self, cfg: &FairnessConfig) -> Vec<f64> {
        let w = &cfg.weights;
        (0..self.spd.len())
            .map(|i| {
                cfg.lambda
                    * (w.w1 * self.spd[i] + w.w2 * self.theil[i] + w.w3 * self.wasserstein[i])
            })
            .collect()
    }
}

fn group_counts(a: &[u8]) -> Result<(usize, usize), MetricError> {
    if let Some(&v) = a.iter().find(|&&v| v > 1) {
        return Err(MetricError::NotBinary(v));
    }
    let m1 = a.iter().filter(|&&v| v == 1).count();
    let m0 = a.len() - m1;
    match (m0, m1) {
        (0, _) => Err(MetricError::EmptyGroup(0)),
        (_, 0) => Err(MetricError::EmptyGroup(1)),
        _ => Ok((m0, m1)),
    }
}

/// Gradients of each soft penalty term with respect to the margins.
pub fn term_gradients(
    margins: &[f64],
    a: &[u8],
    theil_form: TheilForm,
) -> Result<TermGradients, MetricError> {
    banded_term_gradients(margins, a, theil_form, 0.0)
}

/// Half-width of the linear zone around each `|·|` kink used by training.
pub const TRAIN_KINK_BAND: f64 = 1e-3;

/// Derivative of `|x|`, linear inside `[−band, band]`; the plain sign
/// (zero at zero) when `band` is 0.
fn kink(x: f64, band: f64) -> f64 {
    if band > 0.0 {
        (x / band).clamp(-1.0, 1.0)
    } else if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Soft SPD and its per-instance margin derivative, `±σ'(f_i)/m_g`.
fn spd_direction(p: &[f64], a: &[u8], m0: usize, m1: usize) -> (f64, Vec<f64>) {
    let (mut sum0, mut sum1) = (0.0, 0.0);
    for (&q, &g) in p.iter().zip(a) {
        if g == 1 {
            sum1 += q;
        } else {
            sum0 += q;
        }
    }
    let dir = p
        .iter()
        .zip(a)
        .map(|(&q, &g)| {
            let d = if g == 1 {
                1.0 / m1 as f64
            } else {
                -1.0 / m0 as f64
            };
            d * q * (1.0 - q)
        })
        .collect();
    (sum1 / m1 as f64 - sum0 / m0 as f64, dir)
}

/// Coefficient `c ∈ [−1, 1]` of the SPD direction for one round.
///
/// Far from parity this is `sign(SPD)`. Near it, `c` is chosen so the
/// diagonal Newton step `−η·g/h` lands the soft SPD on zero to first
/// order; any such `c` lies in the subdifferential of `|·|` at the kink.
fn spd_coefficient(
    soft_spd: f64,
    dir: &[f64],
    rest: &[f64],
    h: &[f64],
    scale: f64,
    eta: f64,
) -> f64 {
    let (mut a, mut b) = (0.0, 0.0);
    for ((&d, &r), &hi) in dir.iter().zip(rest).zip(h) {
        a += d * r / hi;
        b += scale * d * d / hi;
    }
    if b > 0.0 && b.is_finite() {
        ((soft_spd / eta - a) / b).clamp(-1.0, 1.0)
    } else {
        kink(soft_spd, 0.0)
    }
}

/// Walks the merged quantile grid `{k/m0} ∪ {k/m1}`: on each interval the
/// i-th smallest of group 0 is matched with the j-th smallest of group 1.
/// Yields `(index in group 0, index in group 1, interval length)`.
fn quantile_pairs(p: &[f64], a: &[u8], m0: usize, m1: usize) -> Vec<(usize, usize, f64)> {
    let m = p.len();
    let mut idx0: Vec<usize> = (0..m).filter(|&i| a[i] == 0).collect();
    let mut idx1: Vec<usize> = (0..m).filter(|&i| a[i] == 1).collect();
    idx0.sort_by(|&u, &v| p[u].total_cmp(&p[v]).then(u.cmp(&v)));
    idx1.sort_by(|&u, &v| p[u].total_cmp(&p[v]).then(u.cmp(&v)));
    let denom = (m0 * m1) as f64;
    let mut out = Vec::with_capacity(m0 + m1);
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0usize; // in units of 1/(m0·m1)
    while i < m0 && j < m1 {
        let end0 = (i + 1) * m1;
        let end1 = (j + 1) * m0;
        let end = end0.min(end1);
        out.push((idx0[i], idx1[j], (end - pos) as f64 / denom));
        pos = end;
        if end0 == end {
            i += 1;
        }
        if end1 == end {
            j += 1;
        }
    }
    out
}

/// As `term_gradients`, with every `|·|` in the SPD and W terms replaced by
/// a Huber function of half-width `band`.
pub fn banded_term_gradients(
    margins: &[f64],
    a: &[u8],
    theil_form: TheilForm,
    band: f64,
) -> Result<TermGradients, MetricError> {
    if margins.len() != a.len() {
        return Err(MetricError::LengthMismatch(margins.len(), a.len()));
    }
    let (m0, m1) = group_counts(a)?;
    let m = margins.len();
    let p: Vec<f64> = margins.iter().map(|&f| sigmoid(f)).collect();
    let slope: Vec<f64> = p.iter().map(|&q| q * (1.0 - q)).collect();

    let (soft_spd, dir) = spd_direction(&p, a, m0, m1);
    let sign = kink(soft_spd, band);
    let spd: Vec<f64> = dir.iter().map(|d| sign * d).collect();

    // Theil: ∂T_mean/∂p_k = (ln r_k − T_mean)/(m·p̄), r_k = p_k/p̄.
    let clamped: Vec<f64> = p.iter().map(|&q| q.max(PROB_EPS)).collect();
    let mean = clamped.iter().sum::<f64>() / m as f64;
    let log_ratio: Vec<f64> = clamped.iter().map(|&q| (q / mean).ln()).collect();
    let t_mean = clamped
        .iter()
        .zip(&log_ratio)
        .map(|(&q, &l)| q / mean * l)
        .sum::<f64>()
        / m as f64;
    let scale = match theil_form {
        TheilForm::Mean => 1.0 / (m as f64 * mean),
        TheilForm::Summed => 1.0 / mean,
    };
    let theil: Vec<f64> = (0..m)
        .map(|k| {
            if p[k] < PROB_EPS {
                0.0
            } else {
                (log_ratio[k] - t_mean) * scale * slope[k]
            }
        })
        .collect();

    let mut wass = vec![0.0; m];
    for (u, v, len) in quantile_pairs(&p, a, m0, m1) {
        let diff = p[v] - p[u];
        if diff != 0.0 {
            let s = len * kink(diff, band);
            wass[v] += s;
            wass[u] -= s;
        }
    }
    for (w, s) in wass.iter_mut().zip(&slope) {
        *w *= s;
    }

    Ok(TermGradients {
        spd,
        theil,
        wasserstein: wass,
    })
}

/// `λ·(w1·∂|SPD|/∂f_i + w2·∂Theil/∂f_i + w3·∂W/∂f_i)` for each instance.
pub fn fairness_gradient(
    margins: &[f64],
    a: &[u8],
    cfg: &FairnessConfig,
) -> Result<Vec<f64>, MetricError> {
    Ok(term_gradients(margins, a, cfg.theil_form)?.combine(cfg))
}

/// Training state after `round` trees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub logloss: f64,
    pub fair_soft: f64,
    pub spd_soft: f64,
    pub theil: f64,
    pub wasserstein: f64,
    pub total: f64,
}

fn trace_row(round: usize, margins: &[f64], y: &[u8], a: &[u8], cfg: &FairnessConfig) -> TraceRow {
    let p: Vec<f64> = margins.iter().map(|&f| sigmoid(f)).collect();
    let view = GroupView::new(&p, a, 0.5).expect("groups checked before training");
    let terms = PenaltyTerms::compute(&view, Mode::Soft, cfg.theil_form);
    let logloss = mean_logloss(&p, y);
    let fair_soft = terms.combine(&cfg.weights);
    TraceRow {
        round,
        logloss,
        fair_soft,
        spd_soft: terms.spd,
        theil: terms.theil,
        wasserstein: terms.wasserstein,
        total: logloss + cfg.lambda * fair_soft,
    }
}

pub fn train_fair(
    train: &Dataset,
    tcfg: &TrainConfig,
    fcfg: &FairnessConfig,
) -> Result<TreeEnsemble, ModelError> {
    train_fair_impl(train, tcfg, fcfg, false).map(|(m, _)| m)
}

/// As `train_fair`, also returning the per-round trace (rounds `0..=T`).
pub fn train_fair_traced(
    train: &Dataset,
    tcfg: &TrainConfig,
    fcfg: &FairnessConfig,
) -> Result<(TreeEnsemble, Vec<TraceRow>), ModelError> {
    train_fair_impl(train, tcfg, fcfg, true)
}

/// Boosting hooks for `L_total`.
///
/// Theil and W enter through their gradients. The `|SPD|` term is handled
/// as a proximal Newton step: once a tree's structure is fitted, its leaf
/// values minimise the second-order model with `SPD` linearised exactly,
/// which sets the SPD coefficient `c ∈ [−1, 1]` in closed form instead of
/// at `sign(SPD)`. Each round then backtracks while `L_total` would rise.
struct FairRound<'a> {
    y: &'a [u8],
    a: &'a [u8],
    cfg: &'a FairnessConfig,
    eta: f64,
    l2: f64,
    groups: (usize, usize),
    traced: bool,
    trace: Vec<TraceRow>,
    // Per-round state shared between `gradients` and `refine_leaves`.
    base_g: Vec<f64>,
    h: Vec<f64>,
    dir: Vec<f64>,
    soft_spd: f64,
}

impl FairRound<'_> {
    fn spd_scale(&self) -> f64 {
        self.cfg.lambda * self.y.len() as f64 * self.cfg.weights.w1
    }
}

impl RoundObjective for FairRound<'_> {
    fn gradients(
        &mut self,
        round: usize,
        margins: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let (y, a, cfg) = (self.y, self.a, self.cfg);
        if self.traced {
            self.trace.push(trace_row(round, margins, y, a, cfg));
        }
        let p: Vec<f64> = margins.iter().map(|&f| sigmoid(f)).collect();
        let (mut g, h) = logloss_grad_hess(&p, y)?;
        if cfg.lambda == 0.0 {
            return Ok((g, h));
        }
        // Gradients of m·L_total: the logistic part is the usual p − y.
        let terms = banded_term_gradients(margins, a, cfg.theil_form, TRAIN_KINK_BAND)
            .map_err(|e| ModelError::Numerical(e.to_string()))?;
        let w = &cfg.weights;
        let lm = cfg.lambda * y.len() as f64;
        for (i, gi) in g.iter_mut().enumerate() {
            *gi += lm * (w.w2 * terms.theil[i] + w.w3 * terms.wasserstein[i]);
        }
        if self.refines() {
            let (m0, m1) = self.groups;
            let (soft_spd, dir) = spd_direction(&p, a, m0, m1);
            let scale = self.spd_scale();
            // Diagonal estimate of c for the structure search.
            let c = spd_coefficient(soft_spd, &dir, &g, &h, scale, self.eta);
            self.base_g = g.clone();
            for (gi, d) in g.iter_mut().zip(&dir) {
                *gi += scale * c * d;
            }
            self.h = h.clone();
            self.dir = dir;
            self.soft_spd = soft_spd;
        }
        Ok((g, h))
    }

    fn refines(&self) -> bool {
        self.cfg.lambda > 0.0 && self.cfg.weights.w1 > 0.0
    }

    fn refine_leaves(&mut self, tree: &mut TreeNode, leaf_of: &[usize]) {
        let k = tree.n_leaves();
        let (mut gs, mut hs, mut ds) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
        for (i, &l) in leaf_of.iter().enumerate() {
            gs[l] += self.base_g[i];
            hs[l] += self.h[i];
            ds[l] += self.dir[i];
        }
        let scale = self.spd_scale();
        // Leaf l moves by η·v_l with v_l = −(G_l + c·scale·D_l)/(H_l + l2),
        // so the first-order SPD change is −η·(A + c·B).
        let (mut a_sum, mut b_sum) = (0.0, 0.0);
        for l in 0..k {
            let denom = hs[l] + self.l2;
            a_sum += gs[l] * ds[l] / denom;
            b_sum += scale * ds[l] * ds[l] / denom;
        }
        let c = if b_sum > 0.0 && b_sum.is_finite() {
            ((self.soft_spd / self.eta - a_sum) / b_sum).clamp(-1.0, 1.0)
        } else {
            kink(self.soft_spd, 0.0)
        };
        let values: Vec<f64> = (0..k)
            .map(|l| leaf_value(gs[l] + c * scale * ds[l], hs[l], self.l2))
            .collect();
        tree.set_leaf_values(&values);
    }

    fn value(&mut self, margins: &[f64]) -> Option<f64> {
        (self.cfg.lambda > 0.0).then(|| trace_row(0, margins, self.y, self.a, self.cfg).total)
    }
}

fn train_fair_impl(
    train: &Dataset,
    tcfg: &TrainConfig,
    fcfg: &FairnessConfig,
    traced: bool,
) -> Result<(TreeEnsemble, Vec<TraceRow>), ModelError> {
    fcfg.validate()?;
    train.require_both_groups()?;
    let x = train.feature_matrix()?;
    let y = train.labels();
    let a = train.sensitive();
    let mut round = FairRound {
        y,
        a,
        cfg: fcfg,
        eta: tcfg.learning_rate,
        l2: tcfg.l2_leaf_reg,
        groups: train.group_sizes(),
        traced,
        trace: Vec::new(),
        base_g: Vec::new(),
        h: Vec::new(),
        dir: Vec::new(),
        soft_spd: 0.0,
    };
    let model = boost_with(&x, tcfg, &mut round)?;
    let mut trace = round.trace;
    if traced {
        let margins = model.predict_margin(&x)?;
        trace.push(trace_row(model.trees.len(), &margins, y, a, fcfg));
    }
    Ok((model, trace))
}

pub fn write_trace_csv(trace: &[TraceRow], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "round,L_log,L_fair_soft,spd_soft,theil,wasserstein,L_total"
    )?;
    for r in trace {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.round, r.logloss, r.fair_soft, r.spd_soft, r.theil, r.wasserstein, r.total
        )?;
    }
    out.flush()
}
