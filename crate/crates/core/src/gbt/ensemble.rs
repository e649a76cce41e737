use serde::{Deserialize, Serialize};

use super::loss::{logloss_grad_hess, sigmoid};
use super::tree::{fit_tree_presorted, ColumnOrder, TrainConfig, TreeNode};
use super::ModelError;
use crate::dataset::Dataset;
use crate::matrix::FeatureMatrix;

/// Additive ensemble: `margin(x) = base_margin + Σ_t η·tree_t(x)`, summed
/// tree by tree in training order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<TreeNode>,
    pub learning_rate: f64,
    pub base_margin: f64,
    pub n_features: usize,
}

impl TreeEnsemble {
    pub fn empty(n_features: usize, learning_rate: f64) -> Self {
        Self {
            trees: Vec::new(),
            learning_rate,
            base_margin: 0.0,
            n_features,
        }
    }

    /// Ensemble holding only the first `k` trees.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            trees: self.trees[..k.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    fn check_features(&self, x: &FeatureMatrix) -> Result<(), ModelError> {
        if x.cols() != self.n_features {
            return Err(ModelError::FeatureCountMismatch {
                expected: self.n_features,
                got: x.cols(),
            });
        }
        Ok(())
    }

    pub fn margin_row(&self, row: impl Fn(usize) -> f64 + Copy) -> f64 {
        let mut m = self.base_margin;
        for t in &self.trees {
            m += self.learning_rate * t.eval_with(row);
        }
        m
    }

    pub fn predict_margin(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        self.check_features(x)?;
        let mut out = vec![self.base_margin; x.rows()];
        for t in &self.trees {
            add_tree(&mut out, t, self.learning_rate, x);
        }
        Ok(out)
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        Ok(self.predict_margin(x)?.into_iter().map(sigmoid).collect())
    }
}

fn add_tree(margins: &mut [f64], tree: &TreeNode, eta: f64, x: &FeatureMatrix) {
    for (i, m) in margins.iter_mut().enumerate() {
        *m += eta * tree.eval_with(|j| x.get(i, j));
    }
}

/// Generic second-order boosting loop.
///
/// `gradients(round, margins)` returns per-row `(g, h)` at the current
/// margins; round `r` is called with the ensemble holding `r` trees.
/// Margins are updated with the same operation order as `predict_margin`.
fn boost<F>(x: &FeatureMatrix, cfg: &TrainConfig, gradients: F) -> Result<TreeEnsemble, ModelError>
where
    F: FnMut(usize, &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError>,
{
    struct Plain<F>(F);
    impl<F> RoundObjective for Plain<F>
    where
        F: FnMut(usize, &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError>,
    {
        fn gradients(
            &mut self,
            round: usize,
            margins: &[f64],
        ) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
            (self.0)(round, margins)
        }
    }
    boost_with(x, cfg, &mut Plain(gradients))
}

/// Step halvings tried before a round is accepted regardless.
pub const MAX_HALVINGS: usize = 10;

/// Per-round hooks of the boosting loop.
pub(crate) trait RoundObjective {
    /// `(g, h)` at the current margins; round `r` sees `r` trees.
    fn gradients(
        &mut self,
        round: usize,
        margins: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), ModelError>;

    /// May reset the leaf values of a freshly fitted tree. `leaf_of[i]` is
    /// row `i`'s leaf in depth-first order.
    fn refine_leaves(&mut self, _tree: &mut TreeNode, _leaf_of: &[usize]) {}

    /// Whether `refine_leaves` needs to be called.
    fn refines(&self) -> bool {
        false
    }

    /// Loss used to backtrack the step; `None` disables backtracking.
    fn value(&mut self, _margins: &[f64]) -> Option<f64> {
        None
    }
}

/// Boosting loop with optional leaf refinement and a backtracking line
/// search: while the new tree raises `value`, its leaves are halved, at
/// most `MAX_HALVINGS` times.
pub(crate) fn boost_with<O: RoundObjective>(
    x: &FeatureMatrix,
    cfg: &TrainConfig,
    obj: &mut O,
) -> Result<TreeEnsemble, ModelError> {
    cfg.validate()?;
    let order = ColumnOrder::new(x);
    let mut model = TreeEnsemble::empty(x.cols(), cfg.learning_rate);
    let mut margins = vec![model.base_margin; x.rows()];
    let mut current = obj.value(&margins);
    for round in 0..cfg.rounds {
        let (g, h) = obj.gradients(round, &margins)?;
        let mut tree = fit_tree_presorted(x, &order, &g, &h, cfg)?;
        if obj.refines() {
            let leaf_of: Vec<usize> = (0..x.rows())
                .map(|i| tree.leaf_index_with(|j| x.get(i, j)))
                .collect();
            obj.refine_leaves(&mut tree, &leaf_of);
        }
        match current {
            Some(cur) => {
                let mut halvings = 0;
                loop {
                    let mut trial = margins.clone();
                    add_tree(&mut trial, &tree, cfg.learning_rate, x);
                    let value = obj.value(&trial).unwrap_or(f64::NEG_INFINITY);
                    if value <= cur || halvings == MAX_HALVINGS {
                        if value > cur {
                            log::debug!("round {round}: objective rose by {:e}", value - cur);
                        }
                        margins = trial;
                        current = Some(value);
                        break;
                    }
                    tree.scale_leaves(0.5);
                    halvings += 1;
                }
            }
            None => add_tree(&mut margins, &tree, cfg.learning_rate, x),
        }
        model.trees.push(tree);
    }
    Ok(model)
}

/// Plain logistic-loss boosting.
pub fn train_baseline(train: &Dataset, cfg: &TrainConfig) -> Result<TreeEnsemble, ModelError> {
    let x = train.feature_matrix()?;
    let y = train.labels();
    boost(&x, cfg, |_, margins| {
        let p: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
        logloss_grad_hess(&p, y)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_util::numeric_schema;
    use crate::gbt::fit_tree;

    #[test]
    fn empty_ensemble_predicts_base() {
        let m = TreeEnsemble::empty(2, 0.1);
        let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 4.0]]);
        assert_eq!(m.predict_margin(&x).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.predict_proba(&x).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn stump_margins_scaled_by_eta() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]);
        let cfg = TrainConfig {
            max_depth: 1,
            l2_leaf_reg: 0.0,
            ..TrainConfig::default()
        };
        let stump = fit_tree(&x, &[-1.0, 1.0], &[1.0, 1.0], &cfg).unwrap();
        let m = TreeEnsemble {
            trees: vec![stump],
            learning_rate: 0.3,
            base_margin: 0.0,
            n_features: 1,
        };
        assert_eq!(m.predict_margin(&x).unwrap(), vec![0.3, -0.3]);
    }

    #[test]
    fn feature_count_checked() {
        let m = TreeEnsemble::empty(3, 0.1);
        let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0]]);
        assert!(matches!(
            m.predict_margin(&x),
            Err(ModelError::FeatureCountMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn baseline_is_deterministic_and_learns() {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| vec![(i % 20) as f64, (i / 20) as f64])
            .collect();
        let y: Vec<u8> = rows.iter().map(|r| (r[0] + r[1] > 14.0) as u8).collect();
        let a: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let d = Dataset::from_matrix(numeric_schema(2), &FeatureMatrix::from_rows(&rows), y, a)
            .unwrap();
        let cfg = TrainConfig {
            rounds: 30,
            ..TrainConfig::default()
        };
        let m1 = train_baseline(&d, &cfg).unwrap();
        let m2 = train_baseline(&d, &cfg).unwrap();
        assert_eq!(m1, m2);
        let p = m1.predict_proba(&d.feature_matrix().unwrap()).unwrap();
        let acc = p
            .iter()
            .zip(d.labels())
            .filter(|(&p, &y)| (p >= 0.5) == (y == 1))
            .count();
        assert!(acc >= 190, "{acc}");
    }
}
