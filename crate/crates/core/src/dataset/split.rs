use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;

const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// The 7:1:2 hold-out ratio.
    pub fn seven_one_two(seed: u64) -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
            seed,
        }
    }

    pub fn fractions(&self) -> [f64; 3] {
        [self.train_frac, self.val_frac, self.test_frac]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::config("split fractions must be positive"));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("fractions do not sum to 1"));
        }
        Ok(())
    }
}

/// Three disjoint partitions plus the source row indices of each.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub indices: [Vec<usize>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub fractions: [f64; 3],
    /// Per split (train, val, test): [majority count, minority count].
    pub class_counts: [[usize; 2]; 3],
    pub rows: [usize; 3],
}

impl Split {
    pub fn manifest(&self, spec: &SplitSpec) -> SplitManifest {
        let counts = |ds: &Dataset| [ds.n() - ds.minority_count(), ds.minority_count()];
        SplitManifest {
            seed: spec.seed,
            fractions: spec.fractions(),
            class_counts: [counts(&self.train), counts(&self.val), counts(&self.test)],
            rows: [self.train.n(), self.val.n(), self.test.n()],
        }
    }
}

/// Largest-remainder apportionment of `n` items over `fractions`. Ties in the
/// remainder go to the earlier slot.
pub(crate) fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &slot in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[slot] += 1;
    }
    counts
}

/// Splits rows into train/val/test, apportioning each class separately.
/// Rows keep their source order within each split.
pub fn split_stratified(data: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let fractions = spec.fractions();
    let mut parts: [Vec<usize>; 3] = Default::default();

    for class in [0u8, 1] {
        let mut idx = data.class_indices(class);
        if idx.len() < SPLIT_NAMES.len() {
            return Err(Error::InsufficientRows {
                class: if class == 1 { "minority" } else { "majority" },
                need: SPLIT_NAMES.len(),
                have: idx.len(),
            });
        }
        idx.shuffle(&mut substream(spec.seed, "split", u64::from(class)));
        let counts = apportion(idx.len(), &fractions);
        let mut start = 0;
        for (part, count) in parts.iter_mut().zip(counts) {
            part.extend_from_slice(&idx[start..start + count]);
            start += count;
        }
    }
    for part in parts.iter_mut() {
        part.sort_unstable();
    }
    Ok(Split {
        train: data.subset(&parts[0]),
        val: data.subset(&parts[1]),
        test: data.subset(&parts[2]),
        indices: parts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use proptest::prelude::*;

    fn toy(n: usize, minority: usize) -> Dataset {
        let m = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let labels = (0..n).map(|i| u8::from(i < minority)).collect();
        Dataset::with_default_names(m, labels).unwrap()
    }

    #[test]
    fn thousand_rows_at_ten_percent() {
        let s = split_stratified(&toy(1000, 100), &SplitSpec::seven_one_two(1)).unwrap();
        let man = s.manifest(&SplitSpec::seven_one_two(1));
        assert_eq!(man.class_counts, [[630, 70], [90, 10], [180, 20]]);
    }

    #[test]
    fn clinical_scale_test_split() {
        // 44,918 rows at 8.8%: 3,953 events
        let s = split_stratified(&toy(44_918, 3_953), &SplitSpec::seven_one_two(2)).unwrap();
        assert_eq!(s.test.n(), 8_984);
        assert_eq!(s.val.n(), 4_492);
    }

    #[test]
    fn rejects_bad_fractions() {
        let spec = SplitSpec {
            train_frac: 0.5,
            val_frac: 0.5,
            test_frac: 0.1,
            seed: 0,
        };
        let err = split_stratified(&toy(100, 10), &spec).unwrap_err();
        assert!(err.to_string().contains("fractions do not sum to 1"));
    }

    #[test]
    fn rejects_tiny_class() {
        assert!(split_stratified(&toy(100, 2), &SplitSpec::seven_one_two(0)).is_err());
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_proportional(
            n in 30usize..400, frac in 0.05f64..0.5, seed in 0u64..1000
        ) {
            let minority = ((n as f64 * frac) as usize).max(3);
            let data = toy(n, minority);
            let spec = SplitSpec::seven_one_two(seed);
            let s = split_stratified(&data, &spec).unwrap();
            let mut all: Vec<usize> = s.indices.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for (part, f) in [&s.train, &s.val, &s.test].iter().zip(spec.fractions()) {
                let exp_min = minority as f64 * f;
                let exp_maj = (n - minority) as f64 * f;
                prop_assert!((part.minority_count() as f64 - exp_min).abs() <= 1.0);
                prop_assert!(((part.n() - part.minority_count()) as f64 - exp_maj).abs() <= 1.0);
            }
            let again = split_stratified(&data, &spec).unwrap();
            prop_assert_eq!(&again.indices, &s.indices);
        }
    }
}
