//! Fairness-aware gradient boosted trees for binary classification.
//!
//! Baseline and penalized boosting ([`gbt`], [`fair_training`]), group
//! fairness metrics ([`fairness`]), Gaussian-process search over the penalty
//! configuration ([`bayes_opt`]), TreeSHAP audits ([`shap`]) and
//! reproducible comparison reports ([`report`]). [`pipeline`] strings them
//! together.

pub mod bayes_opt;
pub mod cli;
pub mod dataset;
mod error;
pub mod evaluate;
pub mod fair_training;
pub mod fairness;
pub mod gbt;
pub mod matrix;
pub mod pipeline;
pub mod report;
pub mod shap;

pub use error::{exit, Error, Result};
