use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use super::{ColumnKind, Dataset, DatasetError, FeatureColumn, FeatureSchema};

/// Exclusion counts from `load_csv`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_label: usize,
    pub dropped_sensitive: usize,
}

impl LoadReport {
    pub fn dropped(&self) -> usize {
        self.dropped_label + self.dropped_sensitive
    }
}

fn parse_label(raw: &str) -> Option<u8> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v == 0.0 => Some(0),
        Ok(v) if v == 1.0 => Some(1),
        _ => None,
    }
}

/// Reads a headered CSV into a raw (unencoded, unstandardized) dataset.
///
/// Records with a missing or non-binary label, or a sensitive value other
/// than the two schema categories, are dropped and counted.
pub fn load_csv(
    path: &Path,
    schema: &FeatureSchema,
) -> Result<(Dataset, LoadReport), DatasetError> {
    schema.validate()?;
    if !path.exists() {
        return Err(DatasetError::FileMissing(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let position: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();

    let missing: Vec<String> = schema
        .all_column_names()
        .filter(|n| !position.contains_key(n))
        .map(str::to_owned)
        .collect();
    let known: Vec<&str> = schema.all_column_names().collect();
    let unexpected: Vec<String> = header
        .iter()
        .filter(|h| !known.contains(&h.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() || position.len() != header.len() {
        return Err(DatasetError::HeaderMismatch {
            missing,
            unexpected,
        });
    }

    let feature_pos: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| position[c.name.as_str()])
        .collect();
    let label_pos = position[schema.label_column.as_str()];
    let sensitive_pos = position[schema.sensitive_column.as_str()];

    let mut columns: Vec<FeatureColumn> = schema
        .columns
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Continuous => FeatureColumn::Numeric(Vec::new()),
            ColumnKind::Categorical => FeatureColumn::Text(Vec::new()),
        })
        .collect();
    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut report = LoadReport::default();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        report.rows_read += 1;
        let Some(label) = parse_label(record.get(label_pos).unwrap_or("")) else {
            report.dropped_label += 1;
            continue;
        };
        let Some(code) = schema.sensitive_code(record.get(sensitive_pos).unwrap_or("")) else {
            report.dropped_sensitive += 1;
            continue;
        };
        // Parse the whole row before pushing so a bad cell leaves no partial row.
        let mut parsed = Vec::with_capacity(feature_pos.len());
        for (spec, &p) in schema.columns.iter().zip(&feature_pos) {
            let cell = record.get(p).unwrap_or("");
            let ok = match spec.kind {
                ColumnKind::Continuous => cell.parse::<f64>().is_ok_and(f64::is_finite),
                ColumnKind::Categorical => !cell.is_empty(),
            };
            if !ok {
                return Err(DatasetError::BadCell {
                    row: row_idx + 1,
                    column: spec.name.clone(),
                    value: cell.to_owned(),
                });
            }
            parsed.push(cell);
        }
        for (col, cell) in columns.iter_mut().zip(parsed) {
            match col {
                FeatureColumn::Numeric(c) => c.push(cell.parse().expect("validated above")),
                FeatureColumn::Text(c) => c.push(cell.to_owned()),
            }
        }
        y.push(label);
        a.push(code);
    }

    if y.is_empty() {
        return Err(DatasetError::ZeroUsableRows {
            dropped: report.dropped(),
        });
    }
    let mut dataset = Dataset::new(schema.clone(), columns, y, a)?;
    if report.dropped() > 0 {
        dataset.warnings.push(format!(
            "dropped {} of {} rows (label: {}, sensitive: {})",
            report.dropped(),
            report.rows_read,
            report.dropped_label,
            report.dropped_sensitive
        ));
    }
    Ok((dataset, report))
}

/// Writes `dataset` as CSV with schema column order; sensitive codes are
/// written back as their category strings.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    let schema = dataset.schema();
    let header: Vec<&str> = schema.all_column_names().collect();
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for i in 0..dataset.len() {
        line.clear();
        for col in dataset.columns() {
            match col {
                FeatureColumn::Numeric(v) => line.push_str(&v[i].to_string()),
                FeatureColumn::Text(v) => line.push_str(&v[i]),
            }
            line.push(',');
        }
        line.push_str(&dataset.labels()[i].to_string());
        line.push(',');
        line.push_str(&schema.sensitive_values[dataset.sensitive()[i] as usize]);
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ColumnSpec;

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

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn drops_unparseable_sensitive_value() {
        let f = write("age,ward,outcome,sex\n30,A,1,F\n40,B,0,U\n50,A,1,M\n");
        let (d, report) = load_csv(f.path(), &schema()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(report.dropped(), 1);
        assert_eq!(report.dropped_sensitive, 1);
        assert_eq!(d.sensitive(), &[0, 1]);
        assert_eq!(d.labels(), &[1, 1]);
    }

    #[test]
    fn drops_missing_label() {
        let f = write("age,ward,outcome,sex\n30,A,,F\n40,B,0,M\n");
        let (d, report) = load_csv(f.path(), &schema()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(report.dropped_label, 1);
        assert_eq!(d.warnings().len(), 1);
    }

    #[test]
    fn header_without_sensitive_column() {
        let f = write("age,ward,outcome\n30,A,1\n");
        match load_csv(f.path(), &schema()) {
            Err(DatasetError::HeaderMismatch { missing, .. }) => assert_eq!(missing, vec!["sex"]),
            other => panic!("expected header mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        let err = load_csv(Path::new("/nonexistent/cohort.csv"), &schema()).unwrap_err();
        assert!(matches!(err, DatasetError::FileMissing(_)));
    }

    #[test]
    fn zero_usable_rows() {
        let f = write("age,ward,outcome,sex\n30,A,1,X\n");
        assert!(matches!(
            load_csv(f.path(), &schema()),
            Err(DatasetError::ZeroUsableRows { dropped: 1 })
        ));
    }

    #[test]
    fn bad_continuous_cell() {
        let f = write("age,ward,outcome,sex\nold,A,1,F\n");
        assert!(matches!(
            load_csv(f.path(), &schema()),
            Err(DatasetError::BadCell { row: 1, .. })
        ));
    }

    #[test]
    fn hundred_rows_in_any_column_order() {
        let mut text = String::from("sex,outcome,ward,age\n");
        for i in 0..100 {
            text.push_str(&format!(
                "{},{},{},{}\n",
                if i % 3 == 0 { "M" } else { "F" },
                i % 2,
                if i % 5 == 0 { "ICU" } else { "ED" },
                20 + i
            ));
        }
        let f = write(&text);
        let (d, report) = load_csv(f.path(), &schema()).unwrap();
        assert_eq!(d.len(), 100);
        assert_eq!(report.dropped(), 0);
        match &d.columns()[0] {
            FeatureColumn::Numeric(v) => assert_eq!(v[3], 23.0),
            _ => panic!("age should be numeric"),
        }
    }

    #[test]
    fn write_then_load() {
        let f = write("age,ward,outcome,sex\n30.5,A,1,F\n40,B,0,M\n");
        let (d, _) = load_csv(f.path(), &schema()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, out.path()).unwrap();
        let (back, _) = load_csv(out.path(), &schema()).unwrap();
        assert_eq!(back, d);
    }
}
