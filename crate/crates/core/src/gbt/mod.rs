//! Second-order gradient boosting over exact greedy regression trees.

mod ensemble;
mod loss;
pub mod model_io;
mod tree;

use thiserror::Error;

use crate::dataset::DatasetError;

pub use ensemble::MAX_HALVINGS;
pub(crate) use ensemble::{boost_with, RoundObjective};
pub use ensemble::{train_baseline, TreeEnsemble};
pub use loss::{
    clamp_prob, logloss_grad_hess, mean_logloss, sigmoid, sigmoid_derivative, HESS_FLOOR, PROB_EPS,
};
pub use tree::{
    fit_tree, fit_tree_presorted, leaf_value, split_gain, ColumnOrder, TrainConfig, TreeNode,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("feature count mismatch: model has {expected}, input has {got}")]
    FeatureCountMismatch { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
