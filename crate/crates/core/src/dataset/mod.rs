//! Tabular binary-outcome data: ingestion, synthesis, stratified splits and
//! standardization.

mod split;
mod standardize;
mod synthetic;

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use split::{split_stratified, Split, SplitManifest, SplitSpec};
pub use standardize::StandardizationStats;
pub use synthetic::{generate_synthetic, SyntheticSpec};

pub const DEFAULT_LABEL_COLUMN: &str = "label";

/// Feature matrix plus binary labels. Label 1 is the minority (event) class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<u8>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if feature_names.len() != features.cols() {
            return Err(Error::DimensionMismatch {
                expected: features.cols(),
                got: feature_names.len(),
            });
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        if let Some((row, &v)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
            return Err(Error::InvalidLabel {
                row,
                value: v.to_string(),
            });
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos / features.cols(), pos % features.cols());
            return Err(Error::NonNumeric {
                row,
                column: feature_names[col].clone(),
                value: features.as_slice()[pos].to_string(),
            });
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    /// Builds a dataset with generated names `x0..x{d-1}`.
    pub fn with_default_names(features: Matrix, labels: Vec<u8>) -> Result<Self> {
        let names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        Self::new(features, labels, names)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn minority_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Minority-overall rate of this dataset.
    pub fn event_rate(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        self.minority_count() as f64 / self.n() as f64
    }

    pub fn class_indices(&self, class: u8) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Keeps only the listed feature columns, in the given order.
    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_cols(cols),
            labels: self.labels.clone(),
            feature_names: cols.iter().map(|&j| self.feature_names[j].clone()).collect(),
        }
    }

    pub(crate) fn require_both_classes(&self) -> Result<()> {
        let m = self.minority_count();
        if m == 0 {
            return Err(Error::InsufficientRows {
                class: "minority",
                need: 1,
                have: 0,
            });
        }
        if m == self.n() {
            return Err(Error::InsufficientRows {
                class: "majority",
                need: 1,
                have: 0,
            });
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path, label_column: &str) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(label_column);
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.d() + 1);
        for (row, label) in self.features.iter_rows().zip(&self.labels) {
            rec.clear();
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Reads a comma-separated file with a header row. Every column other than
/// `label_column` is a numeric feature.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();

    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_owned()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (j, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            if j == label_idx {
                let label = match cell.parse::<f64>() {
                    Ok(v) if v == 0.0 => 0,
                    Ok(v) if v == 1.0 => 1,
                    _ => {
                        return Err(Error::InvalidLabel {
                            row,
                            value: cell.to_owned(),
                        })
                    }
                };
                labels.push(label);
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => data.push(v),
                    _ => {
                        return Err(Error::NonNumeric {
                            row,
                            column: header[j].clone(),
                            value: cell.to_owned(),
                        })
                    }
                }
            }
        }
    }
    let features = Matrix::from_vec(labels.len(), feature_names.len(), data)?;
    Dataset::new(features, labels, feature_names)
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
