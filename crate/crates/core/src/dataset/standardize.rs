use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl StandardizationStats {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let x = data.features();
        if x.rows() == 0 {
            return Err(Error::Empty("standardization reference"));
        }
        let mean = x.column_means();
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let n = x.rows() as f64;
        let sd: Vec<f64> = var.into_iter().map(|v| (v / n).sqrt()).collect();
        for (j, s) in sd.iter().enumerate() {
            if *s == 0.0 {
                log::warn!(
                    "feature {:?} has zero variance; it will standardize to 0",
                    data.feature_names()[j]
                );
            }
        }
        Ok(Self { mean, sd })
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    /// Indices of features whose deviation is zero.
    pub fn degenerate_features(&self) -> Vec<usize> {
        self.sd
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        if data.d() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: data.d(),
            });
        }
        Ok(())
    }

    /// `(x - mean) / sd`; zero-deviation features map to 0.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        self.check(data)?;
        let mut x = data.features().clone();
        for i in 0..x.rows() {
            for ((v, m), s) in x.row_mut(i).iter_mut().zip(&self.mean).zip(&self.sd) {
                *v = if *s == 0.0 { 0.0 } else { (*v - m) / s };
            }
        }
        Dataset::new(x, data.labels().to_vec(), data.feature_names().to_vec())
    }

    pub fn invert(&self, data: &Dataset) -> Result<Dataset> {
        self.check(data)?;
        let mut x: Matrix = data.features().clone();
        for i in 0..x.rows() {
            for ((v, m), s) in x.row_mut(i).iter_mut().zip(&self.mean).zip(&self.sd) {
                *v = *v * s + m;
            }
        }
        Dataset::new(x, data.labels().to_vec(), data.feature_names().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, split_stratified, SplitSpec, SyntheticSpec};
    use proptest::prelude::*;

    fn ds(rows: &[[f64; 2]]) -> Dataset {
        let labels = (0..rows.len()).map(|i| (i % 2) as u8).collect();
        Dataset::with_default_names(Matrix::from_rows(rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let d = ds(&[[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]);
        let stats = StandardizationStats::fit(&d).unwrap();
        assert_eq!(stats.degenerate_features(), vec![0]);
        let z = stats.apply(&d).unwrap();
        assert_eq!(z.features().column(0), vec![0.0; 3]);
    }

    #[test]
    fn standard_feature_is_unchanged() {
        let d = ds(&[[-1.0, 1.0], [1.0, -1.0]]);
        let z = StandardizationStats::fit(&d).unwrap().apply(&d).unwrap();
        for (a, b) in z.features().as_slice().iter().zip(d.features().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn train_stats_on_val_leave_offset() {
        let data = generate_synthetic(&SyntheticSpec::new(2000, 4, 0.2, 2, 21)).unwrap();
        let split = split_stratified(&data, &SplitSpec::seven_one_two(21)).unwrap();
        let stats = StandardizationStats::fit(&split.train).unwrap();
        let train = stats.apply(&split.train).unwrap();
        let val = stats.apply(&split.val).unwrap();
        for m in train.features().column_means() {
            assert!(m.abs() < 1e-12);
        }
        let val_means = val.features().column_means();
        assert!(val_means.iter().any(|m| m.abs() > 1e-3), "{val_means:?}");
    }

    #[test]
    fn dimension_mismatch() {
        let stats = StandardizationStats {
            mean: vec![0.0],
            sd: vec![1.0],
        };
        assert!(stats.apply(&ds(&[[1.0, 2.0]])).is_err());
    }

    proptest! {
        #[test]
        fn invert_recovers_input(rows in prop::collection::vec(prop::array::uniform2(-1e3f64..1e3), 2..30)) {
            let d = ds(&rows);
            let stats = StandardizationStats::fit(&d).unwrap();
            let back = stats.invert(&stats.apply(&d).unwrap()).unwrap();
            for j in 0..2 {
                if stats.sd[j] == 0.0 { continue; }
                for i in 0..d.n() {
                    let (a, b) = (d.features().get(i, j), back.features().get(i, j));
                    prop_assert!((a - b).abs() <= 1e-10);
                }
            }
        }
    }
}
