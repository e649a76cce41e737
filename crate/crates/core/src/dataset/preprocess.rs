use serde::{Deserialize, Serialize};

use super::{ColumnKind, Dataset, DatasetError, FeatureColumn};

/// Per-column transform fitted on a training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnTransform {
    /// `(x - mean) / std` with population std; `std == 0` maps to zeros.
    Standardize { mean: f64, std: f64 },
    /// Category → index in first-appearance order. Unseen categories map to
    /// `categories.len()`.
    Encode { categories: Vec<String> },
    /// Numeric categorical codes are kept as they are.
    Passthrough,
}

/// Fitted encoders and standardizers for every feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub columns: Vec<ColumnTransform>,
}

impl Preprocessor {
    pub fn fit(d: &Dataset) -> Self {
        let columns = d
            .schema()
            .columns
            .iter()
            .zip(d.columns())
            .map(|(spec, col)| match (spec.kind, col) {
                (ColumnKind::Continuous, FeatureColumn::Numeric(v)) => {
                    let n = v.len().max(1) as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    ColumnTransform::Standardize {
                        mean,
                        std: var.sqrt(),
                    }
                }
                (_, FeatureColumn::Text(v)) => {
                    let mut categories: Vec<String> = Vec::new();
                    for s in v {
                        if !categories.contains(s) {
                            categories.push(s.clone());
                        }
                    }
                    ColumnTransform::Encode { categories }
                }
                (ColumnKind::Categorical, FeatureColumn::Numeric(_)) => {
                    ColumnTransform::Passthrough
                }
            })
            .collect();
        Self { columns }
    }

    /// Applies the stored transforms. A dataset already carrying this exact
    /// transform is returned unchanged.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset, DatasetError> {
        if let Some(existing) = d.transform() {
            if existing == self {
                return Ok(d.clone());
            }
            return Err(DatasetError::InvalidArgument(
                "dataset was already preprocessed with different parameters".into(),
            ));
        }
        if self.columns.len() != d.n_features() {
            return Err(DatasetError::InvalidArgument(format!(
                "preprocessor has {} columns, dataset {}",
                self.columns.len(),
                d.n_features()
            )));
        }
        let mut warnings = Vec::new();
        let mut out = Vec::with_capacity(self.columns.len());
        for ((t, col), spec) in self
            .columns
            .iter()
            .zip(d.columns())
            .zip(&d.schema().columns)
        {
            let transformed = match (t, col) {
                (ColumnTransform::Standardize { mean, std }, FeatureColumn::Numeric(v)) => {
                    if *std > 0.0 {
                        v.iter().map(|x| (x - mean) / std).collect()
                    } else {
                        warnings.push(format!(
                            "column '{}' is constant; standardized to zeros",
                            spec.name
                        ));
                        vec![0.0; v.len()]
                    }
                }
                (ColumnTransform::Encode { categories }, FeatureColumn::Text(v)) => {
                    let mut unseen = 0usize;
                    let codes = v
                        .iter()
                        .map(|s| match categories.iter().position(|c| c == s) {
                            Some(p) => p as f64,
                            None => {
                                unseen += 1;
                                categories.len() as f64
                            }
                        })
                        .collect();
                    if unseen > 0 {
                        warnings.push(format!(
                            "column '{}': {unseen} values with unseen categories",
                            spec.name
                        ));
                    }
                    codes
                }
                (ColumnTransform::Passthrough, FeatureColumn::Numeric(v)) => v.clone(),
                _ => {
                    return Err(DatasetError::InvalidArgument(format!(
                        "column '{}' does not match its fitted transform",
                        spec.name
                    )))
                }
            };
            out.push(FeatureColumn::Numeric(transformed));
        }
        Ok(d.clone().with_transform(out, self.clone(), warnings))
    }
}

/// Fits on `d` and applies to `d`; re-running on the output is a no-op.
pub fn preprocess(d: &Dataset) -> Result<Dataset, DatasetError> {
    match d.transform() {
        Some(t) => t.apply(d),
        None => Preprocessor::fit(d).apply(d),
    }
}
