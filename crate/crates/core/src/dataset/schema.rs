use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
        }
    }
}

/// Feature columns plus the dedicated label and sensitive columns.
///
/// `sensitive_values[0]` is the raw category coded as `a = 0`,
/// `sensitive_values[1]` the category coded as `a = 1` (privileged group).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(rename = "column")]
    pub columns: Vec<ColumnSpec>,
    pub label_column: String,
    pub sensitive_column: String,
    pub sensitive_values: [String; 2],
}

impl FeatureSchema {
    pub fn new(
        columns: Vec<ColumnSpec>,
        label_column: impl Into<String>,
        sensitive_column: impl Into<String>,
        sensitive_values: [String; 2],
    ) -> Result<Self, DatasetError> {
        let schema = Self {
            columns,
            label_column: label_column.into(),
            sensitive_column: sensitive_column.into(),
            sensitive_values,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.label_column == self.sensitive_column {
            return Err(DatasetError::Schema(format!(
                "label and sensitive column are both '{}'",
                self.label_column
            )));
        }
        if self.sensitive_values[0] == self.sensitive_values[1] {
            return Err(DatasetError::Schema(
                "sensitive category strings must differ".into(),
            ));
        }
        let mut seen = HashSet::new();
        for name in self.all_column_names() {
            if !seen.insert(name) {
                return Err(DatasetError::Schema(format!("duplicate column '{name}'")));
            }
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Feature columns followed by label and sensitive column.
    pub fn all_column_names(&self) -> impl Iterator<Item = &str> {
        self.columns
            .iter()
            .map(|c| c.name.as_str())
            .chain([self.label_column.as_str(), self.sensitive_column.as_str()])
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Maps a raw sensitive cell to its binary code.
    pub fn sensitive_code(&self, raw: &str) -> Option<u8> {
        let raw = raw.trim();
        if raw == self.sensitive_values[0] {
            Some(0)
        } else if raw == self.sensitive_values[1] {
            Some(1)
        } else {
            None
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DatasetError> {
        let schema: Self = toml::from_str(text).map_err(|e| DatasetError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema is always representable as TOML")
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => DatasetError::FileMissing(path.to_path_buf()),
            _ => DatasetError::Io(e),
        })?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                ColumnSpec::continuous("age"),
                ColumnSpec::categorical("ward"),
            ],
            "outcome",
            "sex",
            ["F".into(), "M".into()],
        )
        .unwrap()
    }

    #[test]
    fn toml_round_trip() {
        let s = schema();
        let text = s.to_toml_string();
        assert_eq!(FeatureSchema::from_toml_str(&text).unwrap(), s);
    }

    #[test]
    fn parses_handwritten_file() {
        let text = r#"
label_column = "outcome"
sensitive_column = "sex"
sensitive_values = ["F", "M"]

[[column]]
name = "age"
kind = "continuous"

[[column]]
name = "ward"
kind = "categorical"
"#;
        assert_eq!(FeatureSchema::from_toml_str(text).unwrap(), schema());
    }

    #[test]
    fn rejects_duplicate_and_shared_columns() {
        let dup = FeatureSchema::new(
            vec![ColumnSpec::continuous("x"), ColumnSpec::continuous("x")],
            "y",
            "a",
            ["0".into(), "1".into()],
        );
        assert!(matches!(dup, Err(DatasetError::Schema(_))));
        let shared = FeatureSchema::new(
            vec![ColumnSpec::continuous("x")],
            "a",
            "a",
            ["0".into(), "1".into()],
        );
        assert!(matches!(shared, Err(DatasetError::Schema(_))));
        let label_is_feature = FeatureSchema::new(
            vec![ColumnSpec::continuous("y")],
            "y",
            "a",
            ["0".into(), "1".into()],
        );
        assert!(label_is_feature.is_err());
    }

    #[test]
    fn sensitive_codes() {
        let s = schema();
        assert_eq!(s.sensitive_code("F"), Some(0));
        assert_eq!(s.sensitive_code(" M "), Some(1));
        assert_eq!(s.sensitive_code("X"), None);
        assert_eq!(s.sensitive_code(""), None);
    }
}
