//! Class-composition control for background and explanation data.
//!
//! Background rows are drawn per class so that exactly `round(N p)` of them
//! are minority rows. Explanation data keeps every minority row and
//! under-samples the majority class evenly across K-means clusters until the
//! minority-overall rate reaches `p`.

mod kmeans;

use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_json, Dataset, DEFAULT_LABEL_COLUMN};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

pub use kmeans::{
    elbow_of, run_kmeans, run_kmeans_with, select_k_elbow, select_k_elbow_with, wcss_curve, Clustering,
    KMeansOptions,
};

/// Round-half-to-even count used for every `N * p` style target.
pub fn round_count(x: f64) -> usize {
    x.round_ties_even().max(0.0) as usize
}

/// Target minority-overall rate `p` against the source rate `p0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub p: f64,
    pub p0: f64,
}

impl RateSpec {
    /// Balancing mode: `p0 < p <= 0.5`.
    pub fn balancing(p: f64, p0: f64) -> Result<Self> {
        if !(p > p0 && p <= 0.5) {
            return Err(Error::config(format!(
                "balancing rate must satisfy p0 = {p0} < p <= 0.5, got p = {p}"
            )));
        }
        Ok(Self { p, p0 })
    }

    /// Reference mode: the source rate itself.
    pub fn original(p0: f64) -> Self {
        Self { p: p0, p0 }
    }

    pub fn is_reference(&self) -> bool {
        self.p == self.p0
    }
}

#[derive(Debug, Clone)]
pub struct BackgroundSet {
    pub rows: Dataset,
    /// Row indices into the source dataset, ascending.
    pub source_indices: Vec<usize>,
    pub size: usize,
    pub p: f64,
    pub achieved_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackgroundSidecar {
    pub kind: String,
    pub seed: u64,
    pub p: f64,
    pub size: usize,
    pub achieved_rate: f64,
    pub minority: usize,
    pub majority: usize,
    pub source_indices: Vec<usize>,
}

impl BackgroundSet {
    pub fn sidecar(&self) -> BackgroundSidecar {
        let minority = self.rows.minority_count();
        BackgroundSidecar {
            kind: "background".into(),
            seed: self.seed,
            p: self.p,
            size: self.size,
            achieved_rate: self.achieved_rate,
            minority,
            majority: self.size - minority,
            source_indices: self.source_indices.clone(),
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        self.rows.write_csv(&dir.join(format!("{stem}.csv")), DEFAULT_LABEL_COLUMN)?;
        write_json(&dir.join(format!("{stem}.json")), &self.sidecar())
    }
}

fn draw(pool: &[usize], count: usize, seed: u64, label: &str) -> Vec<usize> {
    let mut rng = rng_from(derive_seed(seed, label, 0));
    sample(&mut rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Draws `round(N p)` minority and `N - round(N p)` majority rows without
/// replacement.
pub fn compose_background(source: &Dataset, size: usize, p: f64, seed: u64) -> Result<BackgroundSet> {
    if size == 0 {
        return Err(Error::config("background size N must be positive"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config(format!("rate p must lie in (0, 1), got {p}")));
    }
    let minority = source.class_indices(1);
    let majority = source.class_indices(0);
    let need_min = round_count(size as f64 * p).min(size);
    let need_maj = size - need_min;
    if minority.len() < need_min {
        return Err(Error::InsufficientRows {
            class: "minority",
            need: need_min,
            have: minority.len(),
        });
    }
    if majority.len() < need_maj {
        return Err(Error::InsufficientRows {
            class: "majority",
            need: need_maj,
            have: majority.len(),
        });
    }
    let mut idx = draw(&minority, need_min, seed, "background/minority");
    idx.extend(draw(&majority, need_maj, seed, "background/majority"));
    idx.sort_unstable();
    Ok(BackgroundSet {
        rows: source.subset(&idx),
        source_indices: idx,
        size,
        p,
        achieved_rate: need_min as f64 / size as f64,
        seed,
    })
}

/// Where an explanation row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AllMinority,
    Cluster(usize),
    /// Reference mode: the row was kept without under-sampling.
    Original,
}

#[derive(Debug, Clone)]
pub struct ExplanationSet {
    pub rows: Dataset,
    pub source_indices: Vec<usize>,
    pub provenance: Vec<Provenance>,
    pub p: f64,
    pub achieved_rate: f64,
    pub seed: u64,
    /// Cluster count used for the majority class (0 in reference mode).
    pub k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationSidecar {
    pub kind: String,
    pub seed: u64,
    pub p: f64,
    pub achieved_rate: f64,
    pub rows: usize,
    pub minority: usize,
    pub majority: usize,
    pub clusters: usize,
    pub source_indices: Vec<usize>,
    pub provenance: Vec<Provenance>,
}

impl ExplanationSet {
    /// The whole source, unchanged.
    pub fn original(source: &Dataset) -> Self {
        Self {
            rows: source.clone(),
            source_indices: (0..source.n()).collect(),
            provenance: vec![Provenance::Original; source.n()],
            p: source.event_rate(),
            achieved_rate: source.event_rate(),
            seed: 0,
            k: 0,
        }
    }

    /// Wraps arbitrary rows as a reference-mode explanation set.
    pub fn from_rows(rows: Dataset) -> Self {
        Self::original(&rows)
    }

    pub fn len(&self) -> usize {
        self.rows.n()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.n() == 0
    }

    pub fn sidecar(&self) -> ExplanationSidecar {
        let minority = self.rows.minority_count();
        ExplanationSidecar {
            kind: "explanation".into(),
            seed: self.seed,
            p: self.p,
            achieved_rate: self.achieved_rate,
            rows: self.len(),
            minority,
            majority: self.len() - minority,
            clusters: self.k,
            source_indices: self.source_indices.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        self.rows.write_csv(&dir.join(format!("{stem}.csv")), DEFAULT_LABEL_COLUMN)?;
        write_json(&dir.join(format!("{stem}.json")), &self.sidecar())
    }
}

/// How the majority class is clustered before under-sampling.
#[derive(Debug, Clone, Copy)]
pub enum MajorityClusters<'a> {
    /// Elbow search over k = 1..=k_max, then a fit at the chosen k.
    Auto { k_max: usize },
    Fixed(usize),
    /// A clustering of exactly the majority rows, in source order.
    Precomputed(&'a Clustering),
}

/// Splits `target` rows over clusters of the given sizes: equal shares,
/// clusters too small for their share give everything and the shortfall is
/// spread over the rest. Leftover single rows go to larger clusters first.
pub fn allocate_quotas(sizes: &[usize], target: usize) -> Vec<usize> {
    let mut quota = vec![0; sizes.len()];
    // descending size, ties by index
    let mut active: Vec<usize> = (0..sizes.len()).collect();
    active.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut remaining = target.min(sizes.iter().sum());
    while remaining > 0 && !active.is_empty() {
        let share = remaining.div_ceil(active.len());
        let (small, rest): (Vec<usize>, Vec<usize>) = active.iter().partition(|&&c| sizes[c] < share);
        if small.is_empty() {
            let base = remaining / active.len();
            let extra = remaining % active.len();
            for (pos, &c) in active.iter().enumerate() {
                quota[c] = base + usize::from(pos < extra);
            }
            break;
        }
        for &c in &small {
            quota[c] = sizes[c];
            remaining -= sizes[c];
        }
        active = rest;
    }
    quota
}

/// Keeps every minority row of `source` and `round(m (1 - p) / p)` majority
/// rows drawn evenly across K-means clusters of the majority class.
pub fn undersample_explanation(
    source: &Dataset,
    p: f64,
    clusters: MajorityClusters<'_>,
    seed: u64,
) -> Result<ExplanationSet> {
    let rate = source.event_rate();
    if p <= rate {
        return Err(Error::config(format!(
            "source rate {rate} already at or above target {p}"
        )));
    }
    if p > 0.5 {
        return Err(Error::config(format!("target rate must be <= 0.5, got {p}")));
    }
    let minority = source.class_indices(1);
    let majority = source.class_indices(0);
    let m = minority.len();
    let target = round_count(m as f64 * (1.0 - p) / p);
    if target > majority.len() {
        return Err(Error::InsufficientRows {
            class: "majority",
            need: target,
            have: majority.len(),
        });
    }

    let majority_points = source.features().select_rows(&majority);
    let owned;
    let clustering: &Clustering = match clusters {
        MajorityClusters::Precomputed(c) => {
            if c.assignments.len() != majority.len() {
                return Err(Error::DimensionMismatch {
                    expected: majority.len(),
                    got: c.assignments.len(),
                });
            }
            c
        }
        MajorityClusters::Fixed(k) => {
            owned = run_kmeans_with(&majority_points, k, derive_seed(seed, "undersample/kmeans", 0), &KMeansOptions::default())?;
            &owned
        }
        MajorityClusters::Auto { k_max } => {
            let k_max = k_max.min(majority.len());
            let k = select_k_elbow(&majority_points, k_max, derive_seed(seed, "undersample/elbow", 0))?;
            owned = run_kmeans_with(&majority_points, k, derive_seed(seed, "undersample/kmeans", 0), &KMeansOptions::default())?;
            &owned
        }
    };

    let members = clustering.members();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let quotas = allocate_quotas(&sizes, target);

    let mut picked: Vec<(usize, Provenance)> = minority.iter().map(|&i| (i, Provenance::AllMinority)).collect();
    for (c, (rows, &q)) in members.iter().zip(&quotas).enumerate() {
        let pool: Vec<usize> = rows.iter().map(|&r| majority[r]).collect();
        let drawn = draw(&pool, q, derive_seed(seed, "undersample/cluster", c as u64), "undersample/draw");
        picked.extend(drawn.into_iter().map(|i| (i, Provenance::Cluster(c))));
    }
    picked.sort_unstable_by_key(|(i, _)| *i);
    let source_indices: Vec<usize> = picked.iter().map(|(i, _)| *i).collect();
    let provenance = picked.iter().map(|(_, p)| *p).collect();
    let rows = source.subset(&source_indices);
    let achieved_rate = rows.event_rate();
    Ok(ExplanationSet {
        rows,
        source_indices,
        provenance,
        p,
        achieved_rate,
        seed,
        k: clustering.k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn exact_source(majority: usize, minority: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = crate::rng::rng_from(seed);
        let n = majority + minority;
        let data = (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels = (0..n).map(|i| u8::from(i >= majority)).collect();
        Dataset::with_default_names(Matrix::from_vec(n, 2, data).unwrap(), labels).unwrap()
    }

    #[test]
    fn half_and_half_background() {
        let src = exact_source(2000, 600, 1);
        let bg = compose_background(&src, 1000, 0.5, 3).unwrap();
        assert_eq!(bg.rows.minority_count(), 500);
        assert_eq!(bg.rows.n(), 1000);
        assert_eq!(bg.achieved_rate, 0.5);
    }

    #[test]
    fn clinical_rate_background() {
        let src = exact_source(2000, 600, 1);
        let bg = compose_background(&src, 1000, 0.088, 3).unwrap();
        assert_eq!(bg.rows.minority_count(), 88);
        assert_eq!(bg.rows.n() - bg.rows.minority_count(), 912);
    }

    #[test]
    fn background_shortfall_is_named() {
        let src = exact_source(2000, 50, 1);
        let err = compose_background(&src, 1000, 0.5, 3).unwrap_err();
        assert_eq!(err.to_string(), "need 500 minority rows, have 50");
        assert!(compose_background(&src, 0, 0.5, 3).is_err());
    }

    #[test]
    fn rounding_is_half_even() {
        assert_eq!(round_count(2.5), 2);
        assert_eq!(round_count(3.5), 4);
        assert_eq!(round_count(790.4), 790);
    }

    #[test]
    fn undersampling_8982_rows_to_half() {
        // 8,982 rows, 790 events (rate 0.088)
        let src = exact_source(8192, 790, 2);
        let expl = undersample_explanation(&src, 0.5, MajorityClusters::Fixed(3), 5).unwrap();
        assert_eq!(expl.rows.minority_count(), 790);
        assert_eq!(expl.len(), 1580);
        assert!(expl.len().abs_diff(1579) <= 1);
    }

    #[test]
    fn reference_rate_is_rejected() {
        let src = exact_source(90, 10, 2);
        let err = undersample_explanation(&src, 0.1, MajorityClusters::Fixed(2), 0).unwrap_err();
        assert!(err.to_string().contains("already at or above target"), "{err}");
    }

    #[test]
    fn equal_clusters_share_evenly() {
        assert_eq!(allocate_quotas(&[10, 10, 10], 9), vec![3, 3, 3]);
        // small cluster gives all, deficit spread over the rest
        assert_eq!(allocate_quotas(&[2, 10, 10], 12), vec![2, 5, 5]);
        // remainder goes to the largest clusters first
        assert_eq!(allocate_quotas(&[5, 9, 7], 10), vec![3, 4, 3]);
        assert_eq!(allocate_quotas(&[1, 1, 50], 10), vec![1, 1, 8]);
    }

    #[test]
    fn provenance_tracks_clusters() {
        let src = exact_source(300, 30, 3);
        let expl = undersample_explanation(&src, 0.25, MajorityClusters::Fixed(3), 8).unwrap();
        for (&i, prov) in expl.source_indices.iter().zip(&expl.provenance) {
            match prov {
                Provenance::AllMinority => assert_eq!(src.labels()[i], 1),
                Provenance::Cluster(c) => {
                    assert_eq!(src.labels()[i], 0);
                    assert!(*c < 3);
                }
                Provenance::Original => panic!("unexpected reference row"),
            }
        }
        assert_eq!(expl.len(), 30 + 90);
    }

    #[test]
    fn precomputed_clustering_must_cover_majority() {
        let src = exact_source(40, 10, 3);
        let pts = src.features().select_rows(&src.class_indices(0)[..10]);
        let c = run_kmeans(&pts, 2, 0, 50, 1e-8).unwrap();
        assert!(undersample_explanation(&src, 0.5, MajorityClusters::Precomputed(&c), 0).is_err());
    }

    #[test]
    fn auto_clustering_runs() {
        let src = exact_source(360, 40, 4);
        let expl = undersample_explanation(&src, 0.5, MajorityClusters::Auto { k_max: 6 }, 1).unwrap();
        assert!(expl.k >= 2 && expl.k <= 5);
        assert_eq!(expl.rows.minority_count(), src.minority_count());
    }

    proptest! {
        #[test]
        fn sampling_invariants(maj in 50usize..400, min in 5usize..50, p in 0.15f64..0.5, seed in 0u64..100, k in 1usize..5) {
            let src = exact_source(maj, min, seed);
            prop_assume!(p > src.event_rate());
            let target = round_count(min as f64 * (1.0 - p) / p);
            prop_assume!(target <= maj);
            let expl = undersample_explanation(&src, p, MajorityClusters::Fixed(k), seed).unwrap();
            let again = undersample_explanation(&src, p, MajorityClusters::Fixed(k), seed).unwrap();
            prop_assert_eq!(&expl.source_indices, &again.source_indices);
            let uniq: HashSet<_> = expl.source_indices.iter().collect();
            prop_assert_eq!(uniq.len(), expl.len());
            let mins: HashSet<usize> = expl.source_indices.iter().copied().filter(|&i| src.labels()[i] == 1).collect();
            prop_assert_eq!(mins, src.class_indices(1).into_iter().collect::<HashSet<_>>());
            prop_assert!((expl.achieved_rate - p).abs() <= 1.0 / expl.len() as f64 + 1e-12);

            let n_bg = (maj + min) / 2;
            if let Ok(bg) = compose_background(&src, n_bg, p, seed) {
                let uniq: HashSet<_> = bg.source_indices.iter().collect();
                prop_assert_eq!(uniq.len(), n_bg);
                prop_assert!((bg.achieved_rate - p).abs() <= 1.0 / n_bg as f64);
                let again = compose_background(&src, n_bg, p, seed).unwrap();
                prop_assert_eq!(bg.source_indices, again.source_indices);
            }
        }
    }
}
