//! Tabular cohorts with a binary label and a binary sensitive attribute.
//!
//! A cohort moves through `load_csv` (or `synth_biased`), `stratified_split`
//! and `Preprocessor::fit` on the train side, after which every feature
//! column is numeric and the data can be handed to the boosting core.

mod csv_io;
mod preprocess;
mod schema;
mod split;
mod synth;

use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::matrix::FeatureMatrix;

pub use csv_io::{load_csv, write_csv, LoadReport};
pub use preprocess::{preprocess, ColumnTransform, Preprocessor};
pub use schema::{ColumnKind, ColumnSpec, FeatureSchema};
pub use split::{stratified_split, SplitPair, Stratification};
pub use synth::{synth_biased, synth_with, SynthDesign, SynthSpec, PROXY_FEATURE};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {0}")]
    FileMissing(PathBuf),
    #[error("header mismatch: missing {missing:?}, unexpected {unexpected:?}")]
    HeaderMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("no usable rows after dropping {dropped} invalid records")]
    ZeroUsableRows { dropped: usize },
    #[error("row {row}: cannot parse column '{column}' value {value:?}")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("group a={0} is empty")]
    EmptyGroup(u8),
    #[error("dataset is not preprocessed: column '{0}' is still categorical text")]
    NotPreprocessed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One feature column, either raw/numeric or categorical text awaiting encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureColumn {
    Numeric(Vec<f64>),
    Text(Vec<String>),
}

impl FeatureColumn {
    pub fn len(&self) -> usize {
        match self {
            Self::Numeric(v) => v.len(),
            Self::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, indices: &[usize]) -> Self {
        match self {
            Self::Numeric(v) => Self::Numeric(indices.iter().map(|&i| v[i]).collect()),
            Self::Text(v) => Self::Text(indices.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// `m` records of features, binary label `y` and binary sensitive attribute `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    columns: Vec<FeatureColumn>,
    y: Vec<u8>,
    a: Vec<u8>,
    transform: Option<Preprocessor>,
    warnings: Vec<String>,
}

impl Dataset {
    /// Assembles a dataset, checking lengths and binary codes.
    pub fn new(
        schema: FeatureSchema,
        columns: Vec<FeatureColumn>,
        y: Vec<u8>,
        a: Vec<u8>,
    ) -> Result<Self, DatasetError> {
        schema.validate()?;
        if columns.len() != schema.columns.len() {
            return Err(DatasetError::InvalidArgument(format!(
                "{} columns given for a schema with {}",
                columns.len(),
                schema.columns.len()
            )));
        }
        let m = y.len();
        if a.len() != m || columns.iter().any(|c| c.len() != m) {
            return Err(DatasetError::InvalidArgument(
                "label, sensitive and feature lengths differ".into(),
            ));
        }
        if y.iter().chain(&a).any(|&v| v > 1) {
            return Err(DatasetError::InvalidArgument(
                "labels and sensitive values must be 0 or 1".into(),
            ));
        }
        Ok(Self {
            schema,
            columns,
            y,
            a,
            transform: None,
            warnings: Vec::new(),
        })
    }

    /// Purely numeric dataset with all-continuous features named by `schema`.
    pub fn from_matrix(
        schema: FeatureSchema,
        x: &FeatureMatrix,
        y: Vec<u8>,
        a: Vec<u8>,
    ) -> Result<Self, DatasetError> {
        let columns = (0..x.cols())
            .map(|j| FeatureColumn::Numeric(x.column(j).to_vec()))
            .collect();
        Self::new(schema, columns, y, a)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.a
    }

    /// Preprocessing applied to this dataset, if any.
    pub fn transform(&self) -> Option<&Preprocessor> {
        self.transform.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema.feature_names()
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        let m1 = self.a.iter().filter(|&&v| v == 1).count();
        (self.a.len() - m1, m1)
    }

    /// Errors unless both sensitive groups have at least one member.
    pub fn require_both_groups(&self) -> Result<(), DatasetError> {
        match self.group_sizes() {
            (0, _) => Err(DatasetError::EmptyGroup(0)),
            (_, 0) => Err(DatasetError::EmptyGroup(1)),
            _ => Ok(()),
        }
    }

    /// Numeric feature matrix; fails while any categorical column is still text.
    pub fn feature_matrix(&self) -> Result<FeatureMatrix, DatasetError> {
        let mut cols = Vec::with_capacity(self.columns.len());
        for (spec, col) in self.schema.columns.iter().zip(&self.columns) {
            match col {
                FeatureColumn::Numeric(v) => cols.push(v.clone()),
                FeatureColumn::Text(_) => {
                    return Err(DatasetError::NotPreprocessed(spec.name.clone()))
                }
            }
        }
        if cols.is_empty() {
            return Ok(FeatureMatrix::zeros(self.len(), 0));
        }
        Ok(FeatureMatrix::from_columns(cols))
    }

    /// Rows at `indices`, in that order. Preprocessing state is carried over.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(indices)).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            a: indices.iter().map(|&i| self.a[i]).collect(),
            transform: self.transform.clone(),
            warnings: self.warnings.clone(),
        }
    }

    /// SHA-256 over schema, labels, sensitive codes and feature cells.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.schema.to_toml_string().as_bytes());
        h.update(&self.y);
        h.update(&self.a);
        for col in &self.columns {
            match col {
                FeatureColumn::Numeric(v) => {
                    for x in v {
                        h.update(x.to_bits().to_le_bytes());
                    }
                }
                FeatureColumn::Text(v) => {
                    for s in v {
                        h.update(s.as_bytes());
                        h.update([0u8]);
                    }
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn with_transform(
        mut self,
        columns: Vec<FeatureColumn>,
        transform: Preprocessor,
        warnings: Vec<String>,
    ) -> Self {
        self.columns = columns;
        self.transform = Some(transform);
        self.warnings.extend(warnings);
        self
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn numeric_schema(d: usize) -> FeatureSchema {
        FeatureSchema::new(
            (0..d)
                .map(|j| ColumnSpec::continuous(format!("x{j}")))
                .collect(),
            "y",
            "a",
            ["0".into(), "1".into()],
        )
        .unwrap()
    }
}
