use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;

use super::{check_background, check_row, expected_value, Attribution, ExplainerConfig, Model};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from;

/// Up to this many features every proper coalition is enumerated.
pub const KERNEL_ENUMERATION_MAX_FEATURES: usize = 12;
const MAX_FEATURES: usize = 64;
const RIDGE: f64 = 1e-10;

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a coalition of size `s` out of `d` features.
pub fn kernel_weight(d: usize, s: usize) -> f64 {
    (d - 1) as f64 / (binomial(d, s) * s as f64 * (d - s) as f64)
}

/// Coalitions as bitmasks with their regression weights.
fn coalitions(d: usize, cfg: &ExplainerConfig, seed: u64) -> Vec<(u64, f64)> {
    if d <= KERNEL_ENUMERATION_MAX_FEATURES {
        return (1u64..(1u64 << d) - 1)
            .map(|m| (m, kernel_weight(d, m.count_ones() as usize)))
            .collect();
    }
    // Sample sizes by their total kernel mass, then a uniform subset of that
    // size; each draw then carries unit weight.
    let mut rng = rng_from(seed);
    let size_mass: Vec<f64> = (1..d).map(|s| (d - 1) as f64 / (s * (d - s)) as f64).collect();
    let sizes = WeightedIndex::new(&size_mass).expect("positive masses");
    let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
    for _ in 0..cfg.n_samples {
        let s = sizes.sample(&mut rng) + 1;
        let mask = sample(&mut rng, d, s).into_iter().fold(0u64, |m, j| m | 1 << j);
        *counts.entry(mask).or_default() += 1.0;
    }
    counts.into_iter().collect()
}

fn coalition_value(model: &dyn Model, background: &Matrix, x: &[f64], mask: u64, buf: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for b in background.iter_rows() {
        for (j, v) in buf.iter_mut().enumerate() {
            *v = if mask >> j & 1 == 1 { x[j] } else { b[j] };
        }
        sum += model.eval(buf);
    }
    sum / background.rows() as f64
}

/// Kernel SHAP: Shapley-kernel weighted least squares over coalitions with
/// the efficiency constraint `sum(phi) = f(x) - base` imposed exactly by
/// eliminating the last feature's coefficient.
pub fn kernel_shap(model: &dyn Model, background: &Matrix, x: &[f64], cfg: &ExplainerConfig) -> Result<Attribution> {
    let d = model.n_features();
    check_row(x, d)?;
    check_background(background, d)?;
    if d < 2 {
        return Err(Error::config("kernel SHAP needs at least 2 features"));
    }
    if d > MAX_FEATURES {
        return Err(Error::Unsupported(format!(
            "kernel SHAP supports at most {MAX_FEATURES} features, got {d}"
        )));
    }
    let base = expected_value(model, background);
    let fx = model.eval(x);
    let delta = fx - base;
    let last = d - 1;
    let coals = coalitions(d, cfg, cfg.row_seed(x));

    // normal equations for the d-1 free coefficients
    let p = d - 1;
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut aty = DVector::<f64>::zeros(p);
    let mut buf = vec![0.0; d];
    let mut row = vec![0.0; p];
    for &(mask, w) in &coals {
        let z_last = (mask >> last & 1) as f64;
        let y = coalition_value(model, background, x, mask, &mut buf) - base - z_last * delta;
        for (j, r) in row.iter_mut().enumerate() {
            *r = (mask >> j & 1) as f64 - z_last;
        }
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            aty[a] += w * row[a] * y;
            for b in 0..p {
                ata[(a, b)] += w * row[a] * row[b];
            }
        }
    }

    let solution = match ata.clone().cholesky() {
        Some(ch) => ch.solve(&aty),
        None => {
            log::warn!("kernel SHAP system is singular; retrying with ridge {RIDGE}");
            let ridged = ata + DMatrix::<f64>::identity(p, p) * RIDGE;
            ridged
                .lu()
                .solve(&aty)
                .ok_or_else(|| Error::Unsupported("kernel SHAP regression could not be solved".into()))?
        }
    };
    let mut phi: Vec<f64> = solution.iter().copied().collect();
    let partial: f64 = phi.iter().sum();
    phi.push(delta - partial);
    Ok(Attribution { phi, base, fx })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{exact_shapley, FnModel, Method};

    fn cfg() -> ExplainerConfig {
        ExplainerConfig::new(Method::Kernel)
    }

    #[test]
    fn kernel_weight_matches_formula() {
        // d = 4, |z| = 1: 3 / (4 * 1 * 3) = 0.25
        assert!((kernel_weight(4, 1) - 0.25).abs() < 1e-15);
        // d = 4, |z| = 2: 3 / (6 * 2 * 2) = 0.125
        assert!((kernel_weight(4, 2) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn linear_model_any_background() {
        let w = [1.0, -0.5, 2.0, 0.25];
        let m = FnModel::new(4, |x: &[f64]| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - 1.0);
        let bg = Matrix::from_rows(&[[0.0, 1.0, 2.0, 3.0], [1.0, -1.0, 0.5, 0.0], [2.0, 2.0, -2.0, 1.0]]).unwrap();
        let x = [0.3, 0.7, -1.1, 2.2];
        let a = kernel_shap(&m, &bg, &x, &cfg()).unwrap();
        let mean = bg.column_means();
        for i in 0..4 {
            assert!((a.phi[i] - w[i] * (x[i] - mean[i])).abs() < 1e-6);
        }
        assert!(a.efficiency_gap().abs() < 1e-9);
    }

    #[test]
    fn constant_model_is_all_zero() {
        let m = FnModel::new(3, |_: &[f64]| 4.2);
        let bg = Matrix::from_rows(&[[0.0, 1.0, 2.0]]).unwrap();
        let a = kernel_shap(&m, &bg, &[5.0, 5.0, 5.0], &cfg()).unwrap();
        assert_eq!(a.base, 4.2);
        for p in a.phi {
            assert!(p.abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_equals_exact_on_interactions() {
        let m = FnModel::new(4, |x: &[f64]| (x[0] * x[1]).sin() + x[2].max(0.0) * x[3] + x[1]);
        let bg = Matrix::from_rows(&[[0.1, 0.2, -0.3, 1.0], [1.0, -1.0, 0.5, 0.2], [-0.4, 0.0, 2.0, -1.0]]).unwrap();
        let x = [1.2, 0.8, 0.4, -0.6];
        let k = kernel_shap(&m, &bg, &x, &cfg()).unwrap();
        let e = exact_shapley(&m, &bg, &x).unwrap();
        for (a, b) in k.phi.iter().zip(&e.phi) {
            assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", k.phi, e.phi);
        }
    }

    #[test]
    fn sampled_regime_is_close_for_additive_model() {
        let d = 16;
        let m = FnModel::new(d, |x: &[f64]| x.iter().enumerate().map(|(j, v)| (j as f64 - 7.5) * v).sum());
        let bg = Matrix::zeros(1, d);
        let x = vec![1.0; d];
        let a = kernel_shap(&m, &bg, &x, &ExplainerConfig { n_samples: 3000, ..cfg() }).unwrap();
        for (j, p) in a.phi.iter().enumerate() {
            assert!((p - (j as f64 - 7.5)).abs() < 1e-6, "{j}: {p}");
        }
        assert!(a.efficiency_gap().abs() < 1e-9);
    }

    #[test]
    fn one_feature_is_rejected() {
        let m = FnModel::new(1, |x: &[f64]| x[0]);
        assert!(kernel_shap(&m, &Matrix::zeros(1, 1), &[1.0], &cfg()).is_err());
    }
}
