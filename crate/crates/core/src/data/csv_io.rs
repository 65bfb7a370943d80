//! One device per CSV file: header row, a label column, all other columns numeric.

use std::collections::BTreeSet;
use std::path::Path;

use super::{Dataset, Sample};
use crate::error::{Error, Result};

struct RawTable {
    feature_names: Vec<String>,
    rows: Vec<(Vec<f64>, String)>,
}

fn read_table(path: &Path, label_column: &str) -> Result<RawTable> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::MissingLabelColumn {
            path: path.to_path_buf(),
            column: label_column.to_string(),
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut rows = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based data row; the header is row 0.
        let row = row_no + 1;
        let mut features = Vec::with_capacity(feature_names.len());
        for (i, cell) in record.iter().enumerate() {
            if i == label_idx {
                continue;
            }
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::MalformedCell {
                    path: path.to_path_buf(),
                    row,
                    column: headers.get(i).unwrap_or("?").to_string(),
                    value: cell.to_string(),
                })?;
            features.push(v);
        }
        let label = record.get(label_idx).unwrap_or("").trim().to_string();
        rows.push((features, label));
    }
    if rows.is_empty() {
        return Err(Error::NoRows(path.to_path_buf()));
    }
    Ok(RawTable { feature_names, rows })
}

/// Loads a device file. The benign label maps to class 0; the remaining
/// label values, sorted, map to 1, 2, ...
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, benign_label: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path, label_column)?;
    let attacks: BTreeSet<&str> = table
        .rows
        .iter()
        .map(|(_, l)| l.as_str())
        .filter(|l| *l != benign_label)
        .collect();
    let mut classes = vec![benign_label.to_string()];
    classes.extend(attacks.into_iter().map(str::to_string));
    build(path, table, classes)
}

/// Loads a device file against a fixed class list (`classes[0]` is benign),
/// so several devices share one label encoding.
pub fn load_csv_with_classes(path: impl AsRef<Path>, label_column: &str, classes: &[String]) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path, label_column)?;
    build(path, table, classes.to_vec())
}

fn build(path: &Path, table: RawTable, classes: Vec<String>) -> Result<Dataset> {
    let mut samples = Vec::with_capacity(table.rows.len());
    for (row_no, (features, label)) in table.rows.into_iter().enumerate() {
        let class = classes
            .iter()
            .position(|c| *c == label)
            .ok_or_else(|| Error::MalformedCell {
                path: path.to_path_buf(),
                row: row_no + 1,
                column: "label".into(),
                value: label.clone(),
            })?;
        samples.push(Sample { features, label: class });
    }
    Dataset::with_names(samples, table.feature_names, classes)
}

/// Writes a dataset in the same schema `load_csv` reads.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header)?;
    for s in &ds.samples {
        let mut rec: Vec<String> = s.features.iter().map(|v| format!("{v}")).collect();
        rec.push(ds.class_names[s.label].clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
