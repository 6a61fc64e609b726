//! Top-k retraining: refit the classifier on the k highest-ranked features
//! and score it on the test split.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bootstrap_auc_ci, AucResult, ImportanceRanking};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mlp::{train_mlp, MlpConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopkSpec {
    pub k_min: usize,
    pub k_max: usize,
    pub replicates: usize,
    pub level: f64,
}

impl Default for TopkSpec {
    fn default() -> Self {
        Self {
            k_min: 3,
            k_max: 20,
            replicates: 1000,
            level: 0.95,
        }
    }
}

impl TopkSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.k_min < 1 || self.k_min > self.k_max {
            return Err(Error::config("top-k range must satisfy 1 ≤ k_min ≤ k_max"));
        }
        if self.k_max > d {
            return Err(Error::config(format!("k_max {} exceeds feature count {d}", self.k_max)));
        }
        if self.replicates < 100 {
            return Err(Error::config("bootstrap needs at least 100 replicates"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config("confidence level must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn ks(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopkRow {
    pub k: usize,
    /// Feature columns used, ascending.
    pub features: Vec<usize>,
    pub result: AucResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopkTable {
    pub rows: Vec<TopkRow>,
}

/// Shares fits between grid cells whose top-k feature sets coincide. The
/// fit seed depends only on (master seed, k), so the sorted feature set is a
/// sufficient key.
#[derive(Debug, Default)]
pub struct TopkCache {
    map: Mutex<HashMap<Vec<usize>, AucResult>>,
}

impl TopkCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Trains on `features` (ascending column order) and bootstraps the test
/// AUC. The same `seed` drives training and resampling.
pub fn fit_and_score(
    features: &[usize],
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    mlp_cfg: &MlpConfig,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<AucResult> {
    let cfg = MlpConfig {
        seed,
        ..mlp_cfg.clone()
    };
    let model = train_mlp(&train.select_features(features), &val.select_features(features), &cfg)?;
    let test = test.select_features(features);
    let scores = model.predict_proba(test.features())?;
    bootstrap_auc_ci(&scores, test.labels(), replicates, level, seed)
}

pub fn topk_seed(master: u64, k: usize) -> u64 {
    derive_seed(master, "topk", k as u64)
}

/// Evaluates every k in `spec`, training the per-k models in parallel.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_topk(
    ranking: &ImportanceRanking,
    spec: &TopkSpec,
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    mlp_cfg: &MlpConfig,
    seed: u64,
    cache: Option<&TopkCache>,
) -> Result<TopkTable> {
    let d = ranking.order.len();
    if train.d() != d || val.d() != d || test.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: train.d(),
        });
    }
    spec.validate(d)?;
    let rows = spec
        .ks()
        .into_par_iter()
        .map(|k| {
            let mut features = ranking.top_k(k).to_vec();
            features.sort_unstable();
            if let Some(hit) = cache.and_then(|c| c.map.lock().unwrap().get(&features).copied()) {
                return Ok(TopkRow { k, features, result: hit });
            }
            let result = fit_and_score(&features, train, val, test, mlp_cfg, spec.replicates, spec.level, topk_seed(seed, k))?;
            if let Some(c) = cache {
                c.map.lock().unwrap().insert(features.clone(), result);
            }
            Ok(TopkRow { k, features, result })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TopkTable { rows })
}

impl TopkTable {
    pub fn get(&self, k: usize) -> Option<&TopkRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    /// One row per k with full-precision AUC and interval.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "auc", "ci_low", "ci_high", "level", "replicates", "features"])?;
        for r in &self.rows {
            let feats: Vec<String> = r.features.iter().map(usize::to_string).collect();
            w.write_record([
                r.k.to_string(),
                r.result.auc.to_string(),
                r.result.ci_low.to_string(),
                r.result.ci_high.to_string(),
                r.result.level.to_string(),
                r.result.replicates.to_string(),
                feats.join(" "),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Writes a wide table: rows `Top k`, one column per labelled table, cells
/// formatted `auc (low-high)` to three decimals.
pub fn write_wide_csv(path: &Path, columns: &[(String, &TopkTable)]) -> Result<()> {
    let mut ks: Vec<usize> = columns.iter().flat_map(|(_, t)| t.rows.iter().map(|r| r.k)).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut out = String::from("variables");
    for (name, _) in columns {
        out.push(',');
        out.push_str(&csv_field(name));
    }
    out.push('\n');
    for k in ks {
        out.push_str(&format!("Top {k}"));
        for (_, t) in columns {
            out.push(',');
            if let Some(r) = t.get(k) {
                out.push_str(&format!(
                    "\"{:.3} ({:.3}-{:.3})\"",
                    r.result.auc, r.result.ci_low, r.result.ci_high
                ));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, split_stratified, SplitSpec, SyntheticSpec};

    fn splits() -> (Dataset, Dataset, Dataset) {
        let data = generate_synthetic(&SyntheticSpec::new(1200, 5, 0.2, 2, 3)).unwrap();
        let s = split_stratified(&data, &SplitSpec::seven_one_two(4)).unwrap();
        (s.train, s.val, s.test)
    }

    fn small_cfg() -> MlpConfig {
        MlpConfig {
            hidden_sizes: vec![8],
            dropout_positions: vec![],
            epochs: 15,
            batch_size: 64,
            learning_rate: 0.05,
            ..MlpConfig::default()
        }
    }

    fn spec(k_min: usize, k_max: usize) -> TopkSpec {
        TopkSpec {
            k_min,
            k_max,
            replicates: 200,
            level: 0.95,
        }
    }

    fn ranking(order: Vec<usize>) -> ImportanceRanking {
        let d = order.len();
        ImportanceRanking {
            scores: vec![0.0; d],
            feature_names: (0..d).map(|j| format!("x{j}")).collect(),
            method: "test".into(),
            order,
        }
    }

    #[test]
    fn k_equal_d_matches_full_model() {
        let (train, val, test) = splits();
        let table = evaluate_topk(&ranking(vec![3, 1, 4, 0, 2]), &spec(5, 5), &train, &val, &test, &small_cfg(), 9, None).unwrap();
        let seed = topk_seed(9, 5);
        let model = train_mlp(&train, &val, &MlpConfig { seed, ..small_cfg() }).unwrap();
        let scores = model.predict_proba(test.features()).unwrap();
        let full = bootstrap_auc_ci(&scores, test.labels(), 200, 0.95, seed).unwrap();
        assert_eq!(table.rows[0].features, vec![0, 1, 2, 3, 4]);
        assert_eq!(table.rows[0].result, full);
    }

    #[test]
    fn reproducible_and_keyed_by_k() {
        let (train, val, test) = splits();
        let r = ranking(vec![0, 1, 2, 3, 4]);
        let a = evaluate_topk(&r, &spec(1, 3), &train, &val, &test, &small_cfg(), 1, None).unwrap();
        let cache = TopkCache::new();
        let b = evaluate_topk(&r, &spec(1, 3), &train, &val, &test, &small_cfg(), 1, Some(&cache)).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.len(), 3);
        assert_eq!(a.rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 2, 3]);
        let c = evaluate_topk(&r, &spec(1, 3), &train, &val, &test, &small_cfg(), 1, Some(&cache)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn range_validation() {
        let (train, val, test) = splits();
        let r = ranking(vec![0, 1, 2, 3, 4]);
        assert!(evaluate_topk(&r, &spec(3, 6), &train, &val, &test, &small_cfg(), 1, None).is_err());
        assert!(evaluate_topk(&r, &spec(0, 2), &train, &val, &test, &small_cfg(), 1, None).is_err());
        assert!(evaluate_topk(&r, &spec(3, 2), &train, &val, &test, &small_cfg(), 1, None).is_err());
    }

    #[test]
    fn wide_layout() {
        let res = AucResult {
            auc: 0.7331,
            ci_low: 0.7,
            ci_high: 0.76,
            level: 0.95,
            replicates: 100,
            seed: 0,
        };
        let t = TopkTable {
            rows: vec![TopkRow { k: 3, features: vec![0, 1, 2], result: res }],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        write_wide_csv(&p, &[("original".into(), &t), ("p=0.5, under".into(), &t)]).unwrap();
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "variables,original,\"p=0.5, under\"\nTop 3,\"0.733 (0.700-0.760)\",\"0.733 (0.700-0.760)\"\n"
        );
    }
}
