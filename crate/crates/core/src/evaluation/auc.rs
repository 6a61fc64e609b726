use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub replicates: usize,
    pub seed: u64,
}

fn split_classes(scores: &[f64], labels: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&s, &l) in scores.iter().zip(labels) {
        match l {
            1 => pos.push(s),
            0 => neg.push(s),
            other => {
                return Err(Error::InvalidLabel {
                    row: 0,
                    value: other.to_string(),
                })
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::config("AUC needs both classes present"));
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC via midranks; ties count one half.
fn auc_of(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * all[i..=j].iter().filter(|(_, p)| *p).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Probability that a random positive outscores a random negative.
pub fn compute_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = split_classes(scores, labels)?;
    Ok(auc_of(&pos, &neg))
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval, resampling within each class so every
/// replicate keeps the original class counts.
pub fn bootstrap_auc_ci(scores: &[f64], labels: &[u8], replicates: usize, level: f64, seed: u64) -> Result<AucResult> {
    if replicates < 100 {
        return Err(Error::config("bootstrap needs at least 100 replicates"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config("confidence level must lie in (0, 1)"));
    }
    let (pos, neg) = split_classes(scores, labels)?;
    let auc = auc_of(&pos, &neg);
    let mut rng = rng_from(derive_seed(seed, "bootstrap", 0));
    let mut bp = vec![0.0; pos.len()];
    let mut bn = vec![0.0; neg.len()];
    let mut reps: Vec<f64> = (0..replicates)
        .map(|_| {
            bp.iter_mut().for_each(|v| *v = pos[rng.gen_range(0..pos.len())]);
            bn.iter_mut().for_each(|v| *v = neg[rng.gen_range(0..neg.len())]);
            auc_of(&bp, &bn)
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    // the point estimate always lies inside the reported interval
    let ci_low = quantile(&reps, alpha).min(auc).clamp(0.0, 1.0);
    let ci_high = quantile(&reps, 1.0 - alpha).max(auc).clamp(0.0, 1.0);
    Ok(AucResult {
        auc,
        ci_low,
        ci_high,
        level,
        replicates,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn known_values() {
        assert_eq!(compute_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(compute_auc(&[0.3; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(compute_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(pairwise(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]), 0.75);
    }

    #[test]
    fn single_class_is_error() {
        assert!(compute_auc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(bootstrap_auc_ci(&[0.1, 0.2], &[0, 0], 100, 0.95, 0).is_err());
        assert!(bootstrap_auc_ci(&[0.1, 0.2], &[0, 1], 99, 0.95, 0).is_err());
    }

    #[test]
    fn separated_interval_is_degenerate() {
        let r = bootstrap_auc_ci(&[0.1, 0.2, 0.3, 0.7, 0.8], &[0, 0, 0, 1, 1], 500, 0.95, 3).unwrap();
        assert_eq!((r.auc, r.ci_low, r.ci_high), (1.0, 1.0, 1.0));
    }

    #[test]
    fn interval_brackets_estimate_and_is_seeded() {
        let mut rng = crate::rng::rng_from(5);
        let labels: Vec<u8> = (0..300).map(|i| u8::from(i % 5 == 0)).collect();
        let scores: Vec<f64> = labels.iter().map(|&l| f64::from(l) * 0.8 + rng.gen::<f64>()).collect();
        let a = bootstrap_auc_ci(&scores, &labels, 1000, 0.95, 11).unwrap();
        assert!(0.0 <= a.ci_low && a.ci_low <= a.auc && a.auc <= a.ci_high && a.ci_high <= 1.0);
        assert!(a.ci_high - a.ci_low > 0.01);
        assert_eq!(a, bootstrap_auc_ci(&scores, &labels, 1000, 0.95, 11).unwrap());
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(
            raw in prop::collection::vec((0u8..8, 0u8..2), 2..80)
        ) {
            // coarse scores force ties
            let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) / 4.0).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let a = compute_auc(&scores, &labels).unwrap();
            prop_assert!((a - pairwise(&scores, &labels)).abs() <= 1e-12);
        }
    }
}
