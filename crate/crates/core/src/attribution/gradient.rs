
use super::{check_background, check_row, expected_value, Attribution, ExplainerConfig, MlpOutput};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mlp::MlpModel;
use crate::rng::rng_from;

/// Expected-gradients estimate: the mean over `n_samples` draws of
/// `(x - b) * grad f(b + alpha (x - b))` with `b` uniform over the background
/// and `alpha` uniform on `[0, 1]`. Draws are stratified (see
/// [`stratified_draws`]), which keeps the expectation and cuts the variance.
pub fn gradient_shap(model: &MlpModel, background: &Matrix, x: &[f64], cfg: &ExplainerConfig) -> Result<Attribution> {
    let d = model.input_dim();
    check_row(x, d)?;
    check_background(background, d)?;
    if cfg.n_samples < 1 {
        return Err(Error::config("n_samples must be ≥ 1"));
    }
    let mut rng = rng_from(cfg.row_seed(x));
    let mut phi = vec![0.0; d];
    let mut point = vec![0.0; d];
    for (r, alpha) in stratified_draws(background.rows(), cfg.n_samples, &mut rng) {
        let b = background.row(r);
        for ((p, xi), bi) in point.iter_mut().zip(x).zip(b) {
            *p = bi + alpha * (xi - bi);
        }
        let trace = model.forward_trace(&point)?;
        let g = model.backprop_gradient(&trace, cfg.output_target);
        for (((acc, gi), xi), bi) in phi.iter_mut().zip(&g).zip(x).zip(b) {
            *acc += (xi - bi) * gi;
        }
    }
    let n = cfg.n_samples as f64;
    phi.iter_mut().for_each(|p| *p /= n);
    let out = MlpOutput {
        model,
        target: cfg.output_target,
    };
    Ok(Attribution {
        phi,
        base: expected_value(&out, background),
        fx: model.eval_unchecked(x, cfg.output_target),
    })
}

/// `(background row, alpha)` pairs. Each row receives `n / rows` draws, the
/// remaining `n % rows` go to distinct rows picked at random, and a row's
/// `m` alphas take one uniform point in each of `m` equal slices of
/// `[0, 1]`. Every draw is marginally uniform, so the estimator stays
/// unbiased.
fn stratified_draws(rows: usize, n: usize, rng: &mut impl rand::Rng) -> Vec<(usize, f64)> {
    let mut counts = vec![n / rows; rows];
    for r in rand::seq::index::sample(rng, rows, n % rows) {
        counts[r] += 1;
    }
    let mut draws = Vec::with_capacity(n);
    for (r, &m) in counts.iter().enumerate() {
        for j in 0..m {
            let u: f64 = rng.gen();
            draws.push((r, (j as f64 + u) / m as f64));
        }
    }
    draws
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::testutil::{random_matrix, random_net};
    use crate::attribution::Method;
    use crate::mlp::{Activation, DenseLayer, OutputTarget};

    fn cfg(n: usize) -> ExplainerConfig {
        ExplainerConfig {
            n_samples: n,
            ..ExplainerConfig::new(Method::Gradient)
        }
    }

    #[test]
    fn linear_model_converges_to_mean_baseline() {
        let w = vec![0.8, -1.5, 0.3];
        let m = MlpModel::from_layers(vec![DenseLayer::new(3, 1, w.clone(), vec![0.2], Activation::Identity).unwrap()]).unwrap();
        let bg = random_matrix(10, 3, 1);
        let x = [1.0, 0.5, -2.0];
        let n = 2000;
        let a = gradient_shap(&m, &bg, &x, &cfg(n)).unwrap();
        let mean = bg.column_means();
        for i in 0..3 {
            // per-draw term w_i (x_i - b_i) has sd w_i * sd(b_i)
            let col = bg.column(i);
            let var = col.iter().map(|v| (v - mean[i]).powi(2)).sum::<f64>() / col.len() as f64;
            let se = w[i].abs() * var.sqrt() / (n as f64).sqrt();
            let expected = w[i] * (x[i] - mean[i]);
            assert!((a.phi[i] - expected).abs() <= 3.0 * se + 1e-12, "{i}: {} vs {expected}", a.phi[i]);
        }
    }

    #[test]
    fn x_equal_to_background_gives_zero() {
        let m = random_net(4, &[5], Activation::Sigmoid, 2);
        let x = [0.1, 0.2, 0.3, 0.4];
        let bg = Matrix::from_rows(&[x, x, x]).unwrap();
        let a = gradient_shap(&m, &bg, &x, &cfg(100)).unwrap();
        assert!(a.phi.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn seeded_and_reproducible() {
        let m = random_net(4, &[5], Activation::Sigmoid, 3);
        let bg = random_matrix(6, 4, 4);
        let x = random_matrix(1, 4, 5);
        let a = gradient_shap(&m, &bg, x.row(0), &cfg(300)).unwrap();
        let b = gradient_shap(&m, &bg, x.row(0), &cfg(300)).unwrap();
        assert_eq!(a, b);
        let c = gradient_shap(&m, &bg, x.row(0), &ExplainerConfig { seed: 1, ..cfg(300) }).unwrap();
        assert_ne!(a.phi, c.phi);
    }

    #[test]
    fn efficiency_within_statistical_tolerance() {
        let m = random_net(5, &[6, 4], Activation::Sigmoid, 6);
        let bg = random_matrix(10, 5, 7);
        let x = random_matrix(1, 5, 8);
        let a = gradient_shap(&m, &bg, x.row(0), &cfg(2000)).unwrap();
        let tol = 0.05 * (a.fx - a.base).abs() + 1e-3;
        assert!(a.efficiency_gap().abs() <= tol);
        let logit = gradient_shap(&m, &bg, x.row(0), &ExplainerConfig { output_target: OutputTarget::Logit, ..cfg(10) }).unwrap();
        assert_eq!(logit.fx, m.output(x.row(0), OutputTarget::Logit).unwrap());
    }

    #[test]
    fn draws_cover_rows_and_slices() {
        let mut rng = rng_from(9);
        let draws = stratified_draws(3, 8, &mut rng);
        assert_eq!(draws.len(), 8);
        let mut per_row = [0usize; 3];
        for &(r, a) in &draws {
            per_row[r] += 1;
            assert!((0.0..1.0).contains(&a));
        }
        let mut sorted = per_row;
        sorted.sort_unstable();
        assert_eq!(sorted, [2, 3, 3]);
        let row0: Vec<f64> = draws.iter().filter(|d| d.0 == 0).map(|d| d.1).collect();
        for (j, a) in row0.iter().enumerate() {
            let m = row0.len() as f64;
            assert!(*a >= j as f64 / m && *a < (j + 1) as f64 / m);
        }
    }

    #[test]
    fn empty_background_rejected() {
        let m = random_net(2, &[3], Activation::Sigmoid, 1);
        assert!(gradient_shap(&m, &Matrix::zeros(0, 2), &[0.0, 0.0], &cfg(10)).is_err());
        assert!(gradient_shap(&m, &random_matrix(2, 2, 1), &[0.0, 0.0], &cfg(0)).is_err());
    }
}
