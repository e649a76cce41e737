//! Exact path-dependent TreeSHAP attributions in margin space, and the
//! per-group attribution gap `Δφ_j = E[φ_j | a=0] − E[φ_j | a=1]`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbt::{TreeEnsemble, TreeNode};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Error)]
pub enum ShapError {
    #[error("tree node with non-positive cover (corrupt model)")]
    ZeroCover,
    #[error("feature count mismatch: model has {expected}, input has {got}")]
    FeatureCountMismatch { expected: usize, got: usize },
    #[error("sensitive vector has {got} entries, attribution has {expected} rows")]
    LengthMismatch { expected: usize, got: usize },
    #[error("group {0} has no rows")]
    EmptyGroup(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: usize,
    zero: f64,
    one: f64,
    weight: f64,
}

const ROOT: usize = usize::MAX;

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: usize) {
    let l = path.len();
    path.push(PathElem {
        feature,
        zero,
        one,
        weight: if l == 0 { 1.0 } else { 0.0 },
    });
    let lf = (l + 1) as f64;
    for k in (0..l).rev() {
        path[k + 1].weight += one * path[k].weight * (k + 1) as f64 / lf;
        path[k].weight = zero * path[k].weight * (l - k) as f64 / lf;
    }
}

fn unwind(path: &mut Vec<PathElem>, i: usize) {
    let l = path.len();
    let (zero, one) = (path[i].zero, path[i].one);
    let lf = l as f64;
    let mut n = path[l - 1].weight;
    for k in (0..l - 1).rev() {
        if one != 0.0 {
            let t = path[k].weight;
            path[k].weight = n * lf / ((k + 1) as f64 * one);
            n = t - path[k].weight * zero * (l - k - 1) as f64 / lf;
        } else {
            path[k].weight = path[k].weight * lf / (zero * (l - k - 1) as f64);
        }
    }
    for k in i..l - 1 {
        path[k].feature = path[k + 1].feature;
        path[k].zero = path[k + 1].zero;
        path[k].one = path[k + 1].one;
    }
    path.pop();
}

/// Sum of the path weights after unwinding element `i`, without mutating.
fn unwound_sum(path: &[PathElem], i: usize) -> f64 {
    let l = path.len();
    let (zero, one) = (path[i].zero, path[i].one);
    let lf = l as f64;
    let mut n = path[l - 1].weight;
    let mut total = 0.0;
    for k in (0..l - 1).rev() {
        if one != 0.0 {
            let t = n * lf / ((k + 1) as f64 * one);
            total += t;
            n = path[k].weight - t * zero * (l - k - 1) as f64 / lf;
        } else {
            total += path[k].weight * lf / (zero * (l - k - 1) as f64);
        }
    }
    total
}

fn recurse(
    node: &TreeNode,
    x: &[f64],
    mut path: Vec<PathElem>,
    zero: f64,
    one: f64,
    feature: usize,
    phi: &mut [f64],
) {
    extend(&mut path, zero, one, feature);
    match node {
        TreeNode::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                phi[e.feature] += w * (e.one - e.zero) * value;
            }
        }
        TreeNode::Split {
            feature: j,
            threshold,
            cover,
            left,
            right,
        } => {
            let (hot, cold) = if x[*j] < *threshold {
                (left, right)
            } else {
                (right, left)
            };
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(k) = path
                .iter()
                .skip(1)
                .position(|e| e.feature == *j)
                .map(|k| k + 1)
            {
                iz = path[k].zero;
                io = path[k].one;
                unwind(&mut path, k);
            }
            recurse(hot, x, path.clone(), iz * hot.cover() / cover, io, *j, phi);
            recurse(cold, x, path, iz * cold.cover() / cover, 0.0, *j, phi);
        }
    }
}

fn check_tree(node: &TreeNode) -> Result<(), ShapError> {
    match node {
        TreeNode::Leaf { cover, .. } if *cover > 0.0 => Ok(()),
        TreeNode::Split {
            cover, left, right, ..
        } if *cover > 0.0 => {
            check_tree(left)?;
            check_tree(right)
        }
        _ => Err(ShapError::ZeroCover),
    }
}

/// Cover-weighted mean leaf value.
pub fn expected_value(node: &TreeNode) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            cover, left, right, ..
        } => (left.cover() * expected_value(left) + right.cover() * expected_value(right)) / cover,
    }
}

fn tree_phi_into(tree: &TreeNode, x: &[f64], phi: &mut [f64]) {
    recurse(
        tree,
        x,
        Vec::with_capacity(tree.depth() + 2),
        1.0,
        1.0,
        ROOT,
        phi,
    );
}

/// Shapley values of one tree's output at `x` and the tree's base value.
///
/// `phi` has length `x.len()`.
pub fn treeshap_tree(tree: &TreeNode, x: &[f64]) -> Result<(Vec<f64>, f64), ShapError> {
    check_tree(tree)?;
    let mut phi = vec![0.0; x.len()];
    tree_phi_into(tree, x, &mut phi);
    Ok((phi, expected_value(tree)))
}

/// Per-instance attributions; `base_value + Σ_j phi[i][j]` is the margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub phi: Vec<Vec<f64>>,
    pub base_value: f64,
    pub feature_names: Vec<String>,
}

impl ShapAttribution {
    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.n_features(), "one name per feature");
        self.feature_names = names;
        self
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn mean_abs(&self) -> Vec<f64> {
        let d = self.n_features();
        let mut acc = vec![0.0; d];
        for row in &self.phi {
            for (s, v) in acc.iter_mut().zip(row) {
                *s += v.abs();
            }
        }
        let m = self.phi.len().max(1) as f64;
        acc.into_iter().map(|s| s / m).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ShapError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{},base_value", self.feature_names.join(","))?;
        for row in &self.phi {
            for v in row {
                write!(out, "{v:?},")?;
            }
            writeln!(out, "{:?}", self.base_value)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn treeshap_ensemble(
    model: &TreeEnsemble,
    x: &FeatureMatrix,
) -> Result<ShapAttribution, ShapError> {
    let d = model.n_features;
    if x.cols() != d {
        return Err(ShapError::FeatureCountMismatch {
            expected: d,
            got: x.cols(),
        });
    }
    for t in &model.trees {
        check_tree(t)?;
    }
    let eta = model.learning_rate;
    let phi: Vec<Vec<f64>> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let row = x.row(i);
            let mut total = vec![0.0; d];
            let mut scratch = vec![0.0; d];
            for t in &model.trees {
                scratch.iter_mut().for_each(|v| *v = 0.0);
                tree_phi_into(t, &row, &mut scratch);
                for (s, v) in total.iter_mut().zip(&scratch) {
                    *s += eta * v;
                }
            }
            total
        })
        .collect();
    let base_value = model.base_margin
        + model
            .trees
            .iter()
            .map(|t| eta * expected_value(t))
            .sum::<f64>();
    Ok(ShapAttribution {
        phi,
        base_value,
        feature_names: (0..d).map(|j| format!("x{j}")).collect(),
    })
}

/// Feature indices by mean `|φ|`, descending; ties keep index order.
pub fn mean_abs_ranking(attr: &ShapAttribution) -> Vec<usize> {
    let scores = attr.mean_abs();
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDisparity {
    pub delta_phi: Vec<f64>,
    pub mean_phi_group0: Vec<f64>,
    pub mean_phi_group1: Vec<f64>,
}

pub fn group_disparity(attr: &ShapAttribution, a: &[u8]) -> Result<GroupDisparity, ShapError> {
    if a.len() != attr.phi.len() {
        return Err(ShapError::LengthMismatch {
            expected: attr.phi.len(),
            got: a.len(),
        });
    }
    let d = attr.n_features();
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (row, &g) in attr.phi.iter().zip(a) {
        let g = (g == 1) as usize;
        counts[g] += 1;
        for (s, v) in sums[g].iter_mut().zip(row) {
            *s += v;
        }
    }
    for g in 0..2 {
        if counts[g] == 0 {
            return Err(ShapError::EmptyGroup(g as u8));
        }
    }
    let [s0, s1] = sums;
    let mean0: Vec<f64> = s0.into_iter().map(|s| s / counts[0] as f64).collect();
    let mean1: Vec<f64> = s1.into_iter().map(|s| s / counts[1] as f64).collect();
    Ok(GroupDisparity {
        delta_phi: mean0.iter().zip(&mean1).map(|(p, q)| p - q).collect(),
        mean_phi_group0: mean0,
        mean_phi_group1: mean1,
    })
}

/// One row per feature, sorted by mean `|φ|` descending.
pub fn write_disparity_csv(
    attr: &ShapAttribution,
    disp: &GroupDisparity,
    path: &Path,
) -> Result<(), ShapError> {
    let mean_abs = attr.mean_abs();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "feature,mean_phi_group0,mean_phi_group1,delta_phi,mean_abs_phi"
    )?;
    for j in mean_abs_ranking(attr) {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?}",
            attr.feature_names[j],
            disp.mean_phi_group0[j],
            disp.mean_phi_group1[j],
            disp.delta_phi[j],
            mean_abs[j]
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Expected output with features in `mask` fixed to `x`, the rest
    /// averaged by cover.
    fn conditional(node: &TreeNode, x: &[f64], mask: u32) -> f64 {
        match node {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split {
                feature,
                threshold,
                cover,
                left,
                right,
            } => {
                if mask & (1 << feature) != 0 {
                    if x[*feature] < *threshold {
                        conditional(left, x, mask)
                    } else {
                        conditional(right, x, mask)
                    }
                } else {
                    (left.cover() * conditional(left, x, mask)
                        + right.cover() * conditional(right, x, mask))
                        / cover
                }
            }
        }
    }

    pub fn brute_force_shap(tree: &TreeNode, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let fact: Vec<f64> = (0..=d)
            .scan(1.0, |acc, k| {
                if k > 0 {
                    *acc *= k as f64;
                }
                Some(*acc)
            })
            .collect();
        let v: Vec<f64> = (0..1u32 << d).map(|s| conditional(tree, x, s)).collect();
        (0..d)
            .map(|j| {
                let mut phi = 0.0;
                for s in 0..1u32 << d {
                    if s & (1 << j) != 0 {
                        continue;
                    }
                    let k = s.count_ones() as usize;
                    let w = fact[k] * fact[d - k - 1] / fact[d];
                    phi += w * (v[(s | (1 << j)) as usize] - v[s as usize]);
                }
                phi
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::brute_force_shap;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn leaf(value: f64, cover: f64) -> TreeNode {
        TreeNode::Leaf { value, cover }
    }

    fn split(feature: usize, threshold: f64, l: TreeNode, r: TreeNode) -> TreeNode {
        TreeNode::Split {
            feature,
            threshold,
            cover: l.cover() + r.cover(),
            left: Box::new(l),
            right: Box::new(r),
        }
    }

    pub(crate) fn random_tree(rng: &mut ChaCha8Rng, depth: usize, d: usize) -> TreeNode {
        if depth == 0 || rng.random_bool(0.2) {
            return leaf(rng.random_range(-2.0..2.0), rng.random_range(1..50) as f64);
        }
        split(
            rng.random_range(0..d),
            rng.random_range(-1.0..1.0),
            random_tree(rng, depth - 1, d),
            random_tree(rng, depth - 1, d),
        )
    }

    #[test]
    fn single_leaf_and_stump() {
        let (phi, base) = treeshap_tree(&leaf(0.7, 10.0), &[0.0, 1.0]).unwrap();
        assert_eq!(phi, vec![0.0, 0.0]);
        assert_eq!(base, 0.7);
        let stump = split(0, 0.5, leaf(-1.0, 3.0), leaf(2.0, 1.0));
        let (phi, base) = treeshap_tree(&stump, &[0.9, 0.0]).unwrap();
        let expected = (3.0 * -1.0 + 2.0) / 4.0;
        assert!((base - expected).abs() < 1e-15);
        assert!((phi[0] - (2.0 - expected)).abs() < 1e-15);
        assert_eq!(phi[1], 0.0);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let d = rng.random_range(1..=8);
            let tree = random_tree(&mut rng, 4, d);
            for _ in 0..5 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.2..1.2)).collect();
                let (phi, base) = treeshap_tree(&tree, &x).unwrap();
                let oracle = brute_force_shap(&tree, &x);
                for (p, o) in phi.iter().zip(&oracle) {
                    assert!((p - o).abs() < 1e-9, "{phi:?} vs {oracle:?}");
                }
                let total: f64 = base + phi.iter().sum::<f64>();
                assert!((total - tree.eval(&x)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_cover_rejected() {
        let bad = split(0, 0.0, leaf(1.0, 0.0), leaf(2.0, 1.0));
        assert!(matches!(
            treeshap_tree(&bad, &[0.0]),
            Err(ShapError::ZeroCover)
        ));
    }

    #[test]
    fn ensemble_linearity_and_local_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trees = vec![random_tree(&mut rng, 3, 4), random_tree(&mut rng, 3, 4)];
        let model = TreeEnsemble {
            trees: trees.clone(),
            learning_rate: 0.3,
            base_margin: -0.2,
            n_features: 4,
        };
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let x = FeatureMatrix::from_rows(&rows);
        let attr = treeshap_ensemble(&model, &x).unwrap();
        let margins = model.predict_margin(&x).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let (p1, _) = treeshap_tree(&trees[0], row).unwrap();
            let (p2, _) = treeshap_tree(&trees[1], row).unwrap();
            for j in 0..4 {
                assert!((attr.phi[i][j] - 0.3 * (p1[j] + p2[j])).abs() < 1e-12);
            }
            let total = attr.base_value + attr.phi[i].iter().sum::<f64>();
            assert!((total - margins[i]).abs() < 1e-9);
        }
        let empty = TreeEnsemble::empty(4, 0.1);
        let attr = treeshap_ensemble(&empty, &x).unwrap();
        assert_eq!(attr.base_value, 0.0);
        assert!(attr.phi.iter().flatten().all(|&v| v == 0.0));
        assert!(treeshap_ensemble(&empty, &FeatureMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn unused_feature_gets_zero() {
        let tree = split(
            0,
            0.0,
            split(2, 0.5, leaf(1.0, 2.0), leaf(3.0, 4.0)),
            leaf(-1.0, 5.0),
        );
        let (phi, _) = treeshap_tree(&tree, &[-0.5, 7.0, 0.9]).unwrap();
        assert_eq!(phi[1], 0.0);
    }

    fn attr(phi: Vec<Vec<f64>>) -> ShapAttribution {
        let d = phi[0].len();
        ShapAttribution {
            phi,
            base_value: 0.0,
            feature_names: (0..d).map(|j| format!("x{j}")).collect(),
        }
    }

    #[test]
    fn ranking_and_disparity() {
        let zeros = attr(vec![vec![0.0; 3]; 4]);
        assert_eq!(mean_abs_ranking(&zeros), vec![0, 1, 2]);
        let a = attr(vec![vec![0.1, -2.0, 0.0], vec![0.2, 1.5, 0.0]]);
        assert_eq!(mean_abs_ranking(&a), vec![1, 0, 2]);
        let b = attr(vec![vec![0.2, 1.5, 0.0], vec![0.1, -2.0, 0.0]]);
        assert_eq!(mean_abs_ranking(&b), mean_abs_ranking(&a));

        let c = attr(vec![vec![1.0], vec![1.0], vec![0.0], vec![0.0]]);
        let disp = group_disparity(&c, &[0, 0, 1, 1]).unwrap();
        assert_eq!(disp.delta_phi, vec![1.0]);
        let sym = attr(vec![vec![0.4, -1.0], vec![0.4, -1.0]]);
        assert_eq!(
            group_disparity(&sym, &[0, 1]).unwrap().delta_phi,
            vec![0.0, 0.0]
        );
        assert!(matches!(
            group_disparity(&sym, &[1, 1]),
            Err(ShapError::EmptyGroup(0))
        ));
    }
}
