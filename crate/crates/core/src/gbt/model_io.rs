//! Versioned text format for ensembles.
//!
//! ```text
//! fairgbt-ensemble 1
//! n_features 10
//! learning_rate 0.1
//! base_margin 0
//! trees 2
//! tree 0 3
//! split 4 -0.25 4000
//! leaf 0.12 1800
//! leaf -0.3 2200
//! tree 1 1
//! leaf 0.01 4000
//! ```
//!
//! Each `tree <index> <node count>` block lists nodes in pre-order:
//! `split <feature> <threshold> <cover>` or `leaf <value> <cover>`.
//! Floats use the shortest representation that parses back to the same bits.

use std::path::Path;

use super::{ModelError, TreeEnsemble, TreeNode};

pub const FORMAT_HEADER: &str = "fairgbt-ensemble";
pub const FORMAT_VERSION: u32 = 1;

fn write_node(node: &TreeNode, out: &mut String) {
    match node {
        TreeNode::Leaf { value, cover } => out.push_str(&format!("leaf {value:?} {cover:?}\n")),
        TreeNode::Split {
            feature,
            threshold,
            cover,
            left,
            right,
        } => {
            out.push_str(&format!("split {feature} {threshold:?} {cover:?}\n"));
            write_node(left, out);
            write_node(right, out);
        }
    }
}

fn count_nodes(node: &TreeNode) -> usize {
    match node {
        TreeNode::Leaf { .. } => 1,
        TreeNode::Split { left, right, .. } => 1 + count_nodes(left) + count_nodes(right),
    }
}

pub fn to_text(model: &TreeEnsemble) -> String {
    let mut out = format!("{FORMAT_HEADER} {FORMAT_VERSION}\n");
    out.push_str(&format!("n_features {}\n", model.n_features));
    out.push_str(&format!("learning_rate {:?}\n", model.learning_rate));
    out.push_str(&format!("base_margin {:?}\n", model.base_margin));
    out.push_str(&format!("trees {}\n", model.trees.len()));
    for (i, t) in model.trees.iter().enumerate() {
        out.push_str(&format!("tree {i} {}\n", count_nodes(t)));
        write_node(t, &mut out);
    }
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> ModelError {
        ModelError::Parse {
            line: self.line_no,
            message: message.into(),
        }
    }

    fn next_fields(&mut self) -> Result<Vec<&'a str>, ModelError> {
        loop {
            let (i, line) = self
                .iter
                .next()
                .ok_or_else(|| self.err("unexpected end of input"))?;
            self.line_no = i + 1;
            let line = line.trim();
            if !line.is_empty() {
                return Ok(line.split_whitespace().collect());
            }
        }
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ModelError> {
        let f = self.next_fields()?;
        if f.len() != 2 || f[0] != key {
            return Err(self.err(format!("expected '{key} <value>'")));
        }
        self.parse(f[1])
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T, ModelError> {
        s.parse()
            .map_err(|_| self.err(format!("cannot parse {s:?}")))
    }

    fn node(&mut self, budget: &mut usize) -> Result<TreeNode, ModelError> {
        if *budget == 0 {
            return Err(self.err("tree has more nodes than declared"));
        }
        *budget -= 1;
        let f = self.next_fields()?;
        match (f.first().copied(), f.len()) {
            (Some("leaf"), 3) => Ok(TreeNode::Leaf {
                value: self.parse(f[1])?,
                cover: self.parse(f[2])?,
            }),
            (Some("split"), 4) => {
                let feature = self.parse(f[1])?;
                let threshold = self.parse(f[2])?;
                let cover = self.parse(f[3])?;
                let left = Box::new(self.node(budget)?);
                let right = Box::new(self.node(budget)?);
                Ok(TreeNode::Split {
                    feature,
                    threshold,
                    cover,
                    left,
                    right,
                })
            }
            _ => Err(self
                .err("expected 'leaf <value> <cover>' or 'split <feature> <threshold> <cover>'")),
        }
    }
}

pub fn from_text(text: &str) -> Result<TreeEnsemble, ModelError> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
        line_no: 0,
    };
    let header = lines.next_fields()?;
    if header.len() != 2 || header[0] != FORMAT_HEADER {
        return Err(lines.err("missing model header"));
    }
    let version: u32 = lines.parse(header[1])?;
    if version != FORMAT_VERSION {
        return Err(lines.err(format!("unsupported model version {version}")));
    }
    let n_features = lines.keyed("n_features")?;
    let learning_rate = lines.keyed("learning_rate")?;
    let base_margin = lines.keyed("base_margin")?;
    let n_trees: usize = lines.keyed("trees")?;
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let f = lines.next_fields()?;
        if f.len() != 3 || f[0] != "tree" || lines.parse::<usize>(f[1])? != t {
            return Err(lines.err(format!("expected 'tree {t} <nodes>'")));
        }
        let mut budget: usize = lines.parse(f[2])?;
        let root = lines.node(&mut budget)?;
        if budget != 0 {
            return Err(lines.err("tree has fewer nodes than declared"));
        }
        if root.max_feature().is_some_and(|j| j >= n_features) {
            return Err(lines.err("split feature index out of range"));
        }
        trees.push(root);
    }
    Ok(TreeEnsemble {
        trees,
        learning_rate,
        base_margin,
        n_features,
    })
}

pub fn save(model: &TreeEnsemble, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, to_text(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TreeEnsemble, ModelError> {
    from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_tree(depth: u32) -> impl Strategy<Value = TreeNode> {
        let leaf = (
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            1.0f64..1e4,
        )
            .prop_map(|(value, cover)| TreeNode::Leaf { value, cover });
        leaf.prop_recursive(depth, 16, 2, |inner| {
            (0usize..6, -1e3f64..1e3, inner.clone(), inner).prop_map(
                |(feature, threshold, l, r)| TreeNode::Split {
                    feature,
                    threshold,
                    cover: l.cover() + r.cover(),
                    left: Box::new(l),
                    right: Box::new(r),
                },
            )
        })
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(
            trees in prop::collection::vec(arb_tree(4), 0..5),
            eta in 0.001f64..1.0,
            base in -5.0f64..5.0,
        ) {
            let m = TreeEnsemble { trees, learning_rate: eta, base_margin: base, n_features: 6 };
            let back = from_text(&to_text(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn rejects_truncated_and_foreign_input() {
        assert!(from_text("").is_err());
        assert!(from_text("not-a-model 1\n").is_err());
        let text = "fairgbt-ensemble 1\nn_features 1\nlearning_rate 0.1\nbase_margin 0\ntrees 1\ntree 0 3\nsplit 0 0.5 2\nleaf 1 1\n";
        assert!(matches!(from_text(text), Err(ModelError::Parse { .. })));
        let bad_feature = "fairgbt-ensemble 1\nn_features 1\nlearning_rate 0.1\nbase_margin 0\ntrees 1\ntree 0 3\nsplit 3 0.5 2\nleaf 1 1\nleaf 2 1\n";
        assert!(from_text(bad_feature).is_err());
    }
}
