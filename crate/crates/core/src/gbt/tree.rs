use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::matrix::FeatureMatrix;

/// Regression tree node. Rows with `x[feature] < threshold` go left.
///
/// `cover` is the number of training rows that reached the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
        cover: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        cover: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Multiplies every leaf value by `s`.
    pub fn scale_leaves(&mut self, s: f64) {
        match self {
            Self::Leaf { value, .. } => *value *= s,
            Self::Split { left, right, .. } => {
                left.scale_leaves(s);
                right.scale_leaves(s);
            }
        }
    }

    /// Position of the reached leaf in depth-first, left-first order.
    pub fn leaf_index_with(&self, value_of: impl Fn(usize) -> f64) -> usize {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                Self::Leaf { .. } => return offset,
                Self::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if value_of(*feature) < *threshold {
                        node = left;
                    } else {
                        offset += left.n_leaves();
                        node = right;
                    }
                }
            }
        }
    }

    /// Overwrites leaf values in depth-first, left-first order.
    pub fn set_leaf_values(&mut self, values: &[f64]) {
        fn walk(node: &mut TreeNode, values: &[f64], next: &mut usize) {
            match node {
                TreeNode::Leaf { value, .. } => {
                    *value = values[*next];
                    *next += 1;
                }
                TreeNode::Split { left, right, .. } => {
                    walk(left, values, next);
                    walk(right, values, next);
                }
            }
        }
        assert_eq!(values.len(), self.n_leaves(), "one value per leaf");
        walk(self, values, &mut 0);
    }

    pub fn cover(&self) -> f64 {
        match self {
            Self::Leaf { cover, .. } | Self::Split { cover, .. } => *cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Self::Leaf { .. })
    }

    /// Leaf value reached by a row whose feature `j` is `value_of(j)`.
    #[inline]
    pub fn eval_with(&self, value_of: impl Fn(usize) -> f64) -> f64 {
        let mut node = self;
        loop {
            match node {
                Self::Leaf { value, .. } => return *value,
                Self::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if value_of(*feature) < *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_with(|j| x[j])
    }

    pub fn depth(&self) -> usize {
        match self {
            Self::Leaf { .. } => 0,
            Self::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Self::Leaf { .. } => 1,
            Self::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Largest feature index used by any split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            Self::Leaf { .. } => None,
            Self::Split {
                feature,
                left,
                right,
                ..
            } => Some(
                (*feature)
                    .max(left.max_feature().unwrap_or(0))
                    .max(right.max_feature().unwrap_or(0)),
            ),
        }
    }

    /// Checks that every split's cover equals its children's sum and that
    /// covers are positive.
    pub fn check_covers(&self) -> bool {
        match self {
            Self::Leaf { cover, .. } => *cover > 0.0,
            Self::Split {
                cover, left, right, ..
            } => {
                *cover > 0.0
                    && *cover == left.cover() + right.cover()
                    && left.check_covers()
                    && right.check_covers()
            }
        }
    }
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_child_cover: f64,
    pub l2_leaf_reg: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_child_cover: 1.0,
            l2_leaf_reg: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidConfig(msg.to_owned()));
        if self.rounds < 1 {
            return bad("rounds must be at least 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return bad("l2_leaf_reg must be non-negative");
        }
        if !(self.min_child_cover >= 0.0 && self.min_child_cover.is_finite()) {
            return bad("min_child_cover must be non-negative");
        }
        Ok(())
    }
}

/// Per-feature row order by ascending value (ties by row index), computed
/// once per training run since the design matrix does not change.
#[derive(Debug, Clone)]
pub struct ColumnOrder {
    sorted: Vec<Vec<usize>>,
}

impl ColumnOrder {
    pub fn new(x: &FeatureMatrix) -> Self {
        let sorted = (0..x.cols())
            .map(|j| {
                let col = x.column(j);
                let mut idx: Vec<usize> = (0..x.rows()).collect();
                idx.sort_by(|&p, &q| col[p].total_cmp(&col[q]).then(p.cmp(&q)));
                idx
            })
            .collect();
        Self { sorted }
    }
}

/// `½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)]`.
#[inline]
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda))
}

/// `−G/(H+λ)`.
#[inline]
pub fn leaf_value(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// Relative gain difference below which two candidate splits tie. Identical
/// partitions reached through different features sum in different orders.
pub const GAIN_TIE_TOL: f64 = 1e-12;

/// Threshold strictly above `lo` and at most `hi`.
#[inline]
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    g: &'a [f64],
    h: &'a [f64],
    cfg: &'a TrainConfig,
}

impl Builder<'_> {
    fn build(&self, rows_by_feature: Vec<Vec<usize>>, depth: usize) -> TreeNode {
        // Sums run in row-index order so they do not depend on the feature scanned.
        let rows = &rows_by_feature[0];
        let mut ordered: Vec<usize> = rows.clone();
        ordered.sort_unstable();
        let (gsum, hsum) = ordered
            .iter()
            .fold((0.0, 0.0), |(gs, hs), &i| (gs + self.g[i], hs + self.h[i]));
        let cover = rows.len() as f64;
        let leaf = TreeNode::Leaf {
            value: leaf_value(gsum, hsum, self.cfg.l2_leaf_reg),
            cover,
        };
        if depth >= self.cfg.max_depth || rows.len() < 2 {
            return leaf;
        }

        let Some(best) = self.best_split(&rows_by_feature, gsum, hsum) else {
            return leaf;
        };

        let col = self.x.column(best.feature);
        let (left_rows, right_rows): (Vec<Vec<usize>>, Vec<Vec<usize>>) = rows_by_feature
            .into_iter()
            .map(|list| list.into_iter().partition(|&i| col[i] < best.threshold))
            .unzip();
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            cover,
            left: Box::new(self.build(left_rows, depth + 1)),
            right: Box::new(self.build(right_rows, depth + 1)),
        }
    }

    fn best_split(
        &self,
        rows_by_feature: &[Vec<usize>],
        gsum: f64,
        hsum: f64,
    ) -> Option<Candidate> {
        let lambda = self.cfg.l2_leaf_reg;
        let min_cover = self.cfg.min_child_cover;
        let n = rows_by_feature[0].len();
        let mut best: Option<Candidate> = None;
        for (feature, rows) in rows_by_feature.iter().enumerate() {
            let col = self.x.column(feature);
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..n - 1 {
                let i = rows[k];
                gl += self.g[i];
                hl += self.h[i];
                let (lo, hi) = (col[i], col[rows[k + 1]]);
                if lo == hi {
                    continue;
                }
                let n_left = (k + 1) as f64;
                if n_left < min_cover || (n as f64 - n_left) < min_cover {
                    continue;
                }
                let gain = split_gain(gl, hl, gsum - gl, hsum - hl, lambda);
                // Gains within rounding of the incumbent count as ties, which
                // keep the lowest feature, then the lowest threshold.
                if gain > 0.0 && best.is_none_or(|b| gain > b.gain + GAIN_TIE_TOL * b.gain) {
                    best = Some(Candidate {
                        feature,
                        threshold: midpoint(lo, hi),
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Fits one regression tree with exact greedy split search.
pub fn fit_tree(
    x: &FeatureMatrix,
    g: &[f64],
    h: &[f64],
    cfg: &TrainConfig,
) -> Result<TreeNode, ModelError> {
    fit_tree_presorted(x, &ColumnOrder::new(x), g, h, cfg)
}

pub fn fit_tree_presorted(
    x: &FeatureMatrix,
    order: &ColumnOrder,
    g: &[f64],
    h: &[f64],
    cfg: &TrainConfig,
) -> Result<TreeNode, ModelError> {
    if g.len() != x.rows() || h.len() != x.rows() {
        return Err(ModelError::LengthMismatch {
            expected: x.rows(),
            got: g.len().min(h.len()),
        });
    }
    if x.rows() == 0 {
        return Err(ModelError::InvalidConfig(
            "cannot fit a tree on zero rows".into(),
        ));
    }
    let builder = Builder { x, g, h, cfg };
    if x.cols() == 0 {
        return Ok(builder.build(vec![(0..x.rows()).collect()], cfg.max_depth));
    }
    Ok(builder.build(order.sorted.clone(), 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(depth: usize, lambda: f64) -> TrainConfig {
        TrainConfig {
            max_depth: depth,
            l2_leaf_reg: lambda,
            min_child_cover: 1.0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn equal_gradients_give_single_leaf() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let t = fit_tree(&x, &[0.5, 0.5, 0.5], &[0.25, 0.25, 0.25], &cfg(3, 1.0)).unwrap();
        match t {
            TreeNode::Leaf { value, cover } => {
                assert!((value - (-1.5 / 1.75)).abs() < 1e-15);
                assert_eq!(cover, 3.0);
            }
            _ => panic!("expected a leaf"),
        }
    }

    #[test]
    fn two_point_stump() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]);
        let t = fit_tree(&x, &[-1.0, 1.0], &[1.0, 1.0], &cfg(1, 0.0)).unwrap();
        match &t {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                cover,
            } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
                assert_eq!(*cover, 2.0);
                assert_eq!(left.eval(&[]), 1.0);
                assert_eq!(right.eval(&[]), -1.0);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.eval(&[0.0]), 1.0);
        assert_eq!(t.eval(&[1.0]), -1.0);
    }

    #[test]
    fn respects_depth_and_covers() {
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|i| vec![i as f64, ((i * 7) % 13) as f64])
            .collect();
        let x = FeatureMatrix::from_rows(&rows);
        let g: Vec<f64> = (0..64).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let h = vec![1.0; 64];
        let t = fit_tree(&x, &g, &h, &cfg(3, 1.0)).unwrap();
        assert!(t.depth() <= 3);
        assert!(t.check_covers());
        assert_eq!(t.cover(), 64.0);
    }

    #[test]
    fn min_child_cover_blocks_small_children() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let g = [-5.0, 1.0, 1.0, 1.0];
        let h = [1.0; 4];
        let mut c = cfg(1, 0.0);
        c.min_child_cover = 2.0;
        match fit_tree(&x, &g, &h, &c).unwrap() {
            TreeNode::Split { threshold, .. } => assert_eq!(threshold, 1.5),
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn tie_break_prefers_lowest_feature() {
        // Both features separate the rows identically.
        let x = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        match fit_tree(&x, &[-1.0, 1.0], &[1.0, 1.0], &cfg(1, 0.0)).unwrap() {
            TreeNode::Split { feature, .. } => assert_eq!(feature, 0),
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn length_mismatch() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]);
        assert!(fit_tree(&x, &[1.0], &[1.0, 1.0], &cfg(1, 0.0)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            rounds: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            max_depth: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            l2_leaf_reg: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
