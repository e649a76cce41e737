//! Bayesian optimization of `θ = (λ, w1, w2, w3)` against a cross-validated
//! accuracy/fairness objective `J = α·AUC − (1−α)·L_fair`.

mod acquisition;
mod gp;
mod sampling;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use acquisition::{expected_improvement, expected_improvement_at, propose_next, N_CANDIDATES};
pub use gp::{GpSurrogate, Hyper};
pub use sampling::{latin_hypercube, shifted_halton};

use crate::dataset::Dataset;
use crate::evaluate::auc_roc;
use crate::fair_training::{train_fair, FairnessConfig};
use crate::fairness::{fairness_loss, GroupView, MetricError, Mode, PenaltyWeights, TheilForm};
use crate::gbt::{ModelError, TrainConfig};

/// Search dimension: `(λ, w1, w2, w3)`.
pub const DIM: usize = 4;

#[derive(Debug, Error)]
pub enum BoError {
    #[error("invalid search setting: {0}")]
    InvalidArgument(String),
    #[error("kernel matrix not positive definite even with maximal jitter")]
    SingularKernel,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// `λ` range, searched on a log scale.
    pub lambda_bounds: (f64, f64),
    pub weight_bounds: (f64, f64),
    pub alpha: f64,
    pub budget: usize,
    pub init_points: usize,
    pub folds: usize,
    pub seed: u64,
    /// Fixed term weights used to score `L_fair` inside `J`.
    pub eval_weights: PenaltyWeights,
    pub theil_form: TheilForm,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            lambda_bounds: (1e-3, 1e2),
            weight_bounds: (0.0, 1.0),
            alpha: 0.5,
            budget: 25,
            init_points: 5,
            folds: 5,
            seed: 0,
            eval_weights: PenaltyWeights::UNIT,
            theil_form: TheilForm::Mean,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), BoError> {
        let (lo, hi) = self.lambda_bounds;
        let (wlo, whi) = self.weight_bounds;
        let bad = |m: String| Err(BoError::InvalidArgument(m));
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad(format!(
                "lambda bounds must satisfy 0 < lo < hi, got ({lo}, {hi})"
            ));
        }
        if !(wlo >= 0.0 && wlo < whi && whi.is_finite()) {
            return bad(format!(
                "weight bounds must satisfy 0 <= lo < hi, got ({wlo}, {whi})"
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) && self.alpha != 1.0 {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.init_points < 2 || self.budget < self.init_points {
            return bad(format!(
                "need budget >= init_points >= 2, got budget {} and init_points {}",
                self.budget, self.init_points
            ));
        }
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        Ok(())
    }

    /// Maps unit-cube coordinates to a fairness configuration.
    pub fn decode(&self, u: &[f64; DIM]) -> FairnessConfig {
        let (lo, hi) = self.lambda_bounds;
        let (wlo, whi) = self.weight_bounds;
        let lambda = (lo.ln() + u[0] * (hi.ln() - lo.ln())).exp();
        let w = |v: f64| wlo + v * (whi - wlo);
        FairnessConfig {
            lambda,
            weights: PenaltyWeights::new(w(u[1]), w(u[2]), w(u[3])),
            theil_form: self.theil_form,
        }
    }
}

/// Validation scores of one fold; `None` where the metric was undefined
/// (single class for AUC, single group for `L_fair`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub auc: Option<f64>,
    pub l_fair: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub k: usize,
    /// Unit-cube coordinates.
    pub theta: [f64; DIM],
    pub config: FairnessConfig,
    pub j_value: f64,
    pub mean_auc: f64,
    pub mean_l_fair: f64,
    pub fold_scores: Vec<FoldScore>,
}

impl Trial {
    /// Trial for an objective evaluated directly, without folds.
    pub fn scored(k: usize, theta: [f64; DIM], space: &SearchSpace, j_value: f64) -> Self {
        Self {
            k,
            theta,
            config: space.decode(&theta),
            j_value,
            mean_auc: f64::NAN,
            mean_l_fair: f64::NAN,
            fold_scores: Vec::new(),
        }
    }

    pub fn skipped_folds(&self) -> usize {
        self.fold_scores
            .iter()
            .filter(|f| f.auc.is_none() || f.l_fair.is_none())
            .count()
    }
}

/// Fold index per row; each `(a, y)` cell is shuffled and dealt round-robin.
pub fn stratified_folds(a: &[u8], y: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut cells: [Vec<usize>; 4] = Default::default();
    for (i, (&g, &t)) in a.iter().zip(y).enumerate() {
        cells[2 * g as usize + t as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; a.len()];
    let mut next = 0;
    for cell in cells.iter_mut() {
        cell.shuffle(&mut rng);
        for &i in cell.iter() {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Cross-validated `J` at unit-cube point `theta`.
pub fn objective_j(
    train: &Dataset,
    theta: &[f64; DIM],
    tcfg: &TrainConfig,
    space: &SearchSpace,
) -> Result<Trial, BoError> {
    let cfg = space.decode(theta);
    evaluate_config(train, *theta, cfg, tcfg, space)
}

/// Cross-validated `J` for an explicit configuration.
pub fn evaluate_config(
    train: &Dataset,
    theta: [f64; DIM],
    cfg: FairnessConfig,
    tcfg: &TrainConfig,
    space: &SearchSpace,
) -> Result<Trial, BoError> {
    if space.folds < 2 {
        return Err(BoError::InvalidArgument("need at least 2 folds".into()));
    }
    let fold_of = stratified_folds(train.sensitive(), train.labels(), space.folds, space.seed);
    let fold_scores: Vec<FoldScore> = (0..space.folds)
        .into_par_iter()
        .map(|f| -> Result<FoldScore, BoError> {
            let (fit_idx, val_idx): (Vec<usize>, Vec<usize>) =
                (0..train.len()).partition(|&i| fold_of[i] != f);
            let fit = train.subset(&fit_idx);
            let val = train.subset(&val_idx);
            let model = train_fair(&fit, tcfg, &cfg)?;
            let p = model.predict_proba(&val.feature_matrix().map_err(ModelError::from)?)?;
            let auc = auc_roc(&p, val.labels()).ok();
            let l_fair = GroupView::new(&p, val.sensitive(), 0.5)
                .ok()
                .map(|v| fairness_loss(&v, &space.eval_weights, Mode::Soft, space.theil_form));
            Ok(FoldScore { auc, l_fair })
        })
        .collect::<Result<_, _>>()?;
    let mean_auc = mean_of(fold_scores.iter().filter_map(|f| f.auc))
        .ok_or_else(|| BoError::Numerical("AUC undefined on every fold".into()))?;
    let mean_l_fair = mean_of(fold_scores.iter().filter_map(|f| f.l_fair))
        .ok_or_else(|| BoError::Numerical("fairness loss undefined on every fold".into()))?;
    for f in &fold_scores {
        if f.auc.is_none() || f.l_fair.is_none() {
            log::warn!("fold metric undefined and skipped: {f:?}");
        }
    }
    Ok(Trial {
        k: 0,
        theta,
        config: cfg,
        j_value: space.alpha * mean_auc - (1.0 - space.alpha) * mean_l_fair,
        mean_auc,
        mean_l_fair,
        fold_scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoResult {
    pub best: Trial,
    pub history: Vec<Trial>,
}

/// Latin-hypercube initialization followed by EI-driven proposals, against
/// any objective `eval(k, θ)`.
pub fn optimize_with<F>(space: &SearchSpace, mut eval: F) -> Result<BoResult, BoError>
where
    F: FnMut(usize, &[f64; DIM]) -> Result<Trial, BoError>,
{
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
    let mut history: Vec<Trial> = Vec::with_capacity(space.budget);
    let mut run = |k: usize, theta: [f64; DIM], history: &mut Vec<Trial>| -> Result<(), BoError> {
        let mut t = eval(k, &theta)?;
        t.k = k;
        t.theta = theta;
        log::info!("trial {k}: theta {:?} J {:.6}", t.config, t.j_value);
        history.push(t);
        Ok(())
    };
    for (k, theta) in latin_hypercube::<DIM>(space.init_points, &mut rng)
        .into_iter()
        .enumerate()
    {
        run(k, theta, &mut history)?;
    }
    for k in space.init_points..space.budget {
        let x: Vec<[f64; DIM]> = history.iter().map(|t| t.theta).collect();
        let y: Vec<f64> = history.iter().map(|t| t.j_value).collect();
        let iter_seed = space
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(k as u64);
        let gp = GpSurrogate::fit(&x, &y, iter_seed)?;
        let theta = propose_next(&gp, iter_seed);
        run(k, theta, &mut history)?;
    }
    let mut best = 0;
    for (i, t) in history.iter().enumerate() {
        if t.j_value > history[best].j_value {
            best = i;
        }
    }
    Ok(BoResult {
        best: history[best].clone(),
        history,
    })
}

/// Searches `θ` maximizing cross-validated `J` on `train`.
pub fn optimize(
    train: &Dataset,
    space: &SearchSpace,
    tcfg: &TrainConfig,
) -> Result<BoResult, BoError> {
    optimize_with(space, |_, theta| objective_j(train, theta, tcfg, space))
}

pub fn write_history_csv(history: &[Trial], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "k,lambda,w1,w2,w3,mean_auc,mean_Lfair,J")?;
    for t in history {
        let w = &t.config.weights;
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            t.k, t.config.lambda, w.w1, w.w2, w.w3, t.mean_auc, t.mean_l_fair, t.j_value
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_biased;
    use crate::gbt::train_baseline;

    #[test]
    fn decode_maps_bounds() {
        let s = SearchSpace::default();
        let lo = s.decode(&[0.0; DIM]);
        let hi = s.decode(&[1.0; DIM]);
        assert!((lo.lambda - 1e-3).abs() < 1e-15);
        assert!((hi.lambda - 1e2).abs() < 1e-10);
        assert_eq!(hi.weights, PenaltyWeights::UNIT);
        assert!((s.decode(&[0.6, 0.0, 0.0, 0.0]).lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let mut s = SearchSpace::default();
        assert!(s.validate().is_ok());
        s.init_points = 1;
        assert!(s.validate().is_err());
        s = SearchSpace {
            lambda_bounds: (1.0, 1.0),
            ..SearchSpace::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn folds_balanced_per_cell() {
        let a: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let y: Vec<u8> = (0..100).map(|i| (i % 5 == 0) as u8).collect();
        let f = stratified_folds(&a, &y, 5, 1);
        assert_eq!(f, stratified_folds(&a, &y, 5, 1));
        for k in 0..5 {
            assert_eq!(f.iter().filter(|&&v| v == k).count(), 20);
        }
    }

    fn small() -> (Dataset, TrainConfig, SearchSpace) {
        let d = synth_biased(400, 4, 2.0, 3).unwrap();
        let tcfg = TrainConfig {
            rounds: 10,
            ..TrainConfig::default()
        };
        let space = SearchSpace {
            folds: 3,
            ..SearchSpace::default()
        };
        (d, tcfg, space)
    }

    #[test]
    fn lambda_zero_reduces_to_baseline() {
        let (d, tcfg, space) = small();
        let t = evaluate_config(&d, [0.0; DIM], FairnessConfig::disabled(), &tcfg, &space).unwrap();
        let fold_of = stratified_folds(d.sensitive(), d.labels(), 3, space.seed);
        let mut aucs = Vec::new();
        for f in 0..3 {
            let (fit, val): (Vec<usize>, Vec<usize>) = (0..d.len()).partition(|&i| fold_of[i] != f);
            let m = train_baseline(&d.subset(&fit), &tcfg).unwrap();
            let val = d.subset(&val);
            let p = m.predict_proba(&val.feature_matrix().unwrap()).unwrap();
            aucs.push(auc_roc(&p, val.labels()).unwrap());
        }
        assert_eq!(t.mean_auc, aucs.iter().sum::<f64>() / 3.0);
        let again =
            evaluate_config(&d, [0.0; DIM], FairnessConfig::disabled(), &tcfg, &space).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn alpha_one_ranks_by_auc() {
        let (d, tcfg, space) = small();
        let space = SearchSpace {
            alpha: 1.0,
            ..space
        };
        let t1 = objective_j(&d, &[0.2, 0.5, 0.5, 0.5], &tcfg, &space).unwrap();
        let t2 = objective_j(&d, &[0.9, 0.9, 0.1, 0.9], &tcfg, &space).unwrap();
        assert_eq!(t1.j_value, t1.mean_auc);
        assert_eq!(t1.j_value > t2.j_value, t1.mean_auc > t2.mean_auc);
    }

    fn quadratic(c: [f64; DIM]) -> impl Fn(&[f64; DIM]) -> f64 {
        move |t| -t.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }

    #[test]
    fn finds_quadratic_optimum() {
        let c = [0.3, 0.7, 0.45, 0.6];
        let f = quadratic(c);
        let space = SearchSpace {
            budget: 30,
            seed: 4,
            ..SearchSpace::default()
        };
        let r = optimize_with(&space, |k, t| Ok(Trial::scored(k, *t, &space, f(t)))).unwrap();
        assert_eq!(r.history.len(), 30);
        assert!(r.history.iter().all(|t| t.j_value <= r.best.j_value));
        let err = r
            .best
            .theta
            .iter()
            .zip(&c)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.15, "{:?}", r.best.theta);
        let again = optimize_with(&space, |k, t| Ok(Trial::scored(k, *t, &space, f(t)))).unwrap();
        let key = |r: &BoResult| {
            r.history
                .iter()
                .map(|t| (t.theta, t.j_value))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&r), key(&again));
    }

    #[test]
    fn budget_equal_init_is_pure_lhs() {
        let f = quadratic([0.5; DIM]);
        let space = SearchSpace {
            budget: 6,
            init_points: 6,
            ..SearchSpace::default()
        };
        let r = optimize_with(&space, |k, t| Ok(Trial::scored(k, *t, &space, f(t)))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
        let lhs = latin_hypercube::<DIM>(6, &mut rng);
        assert_eq!(r.history.iter().map(|t| t.theta).collect::<Vec<_>>(), lhs);
    }
}
