//! SHAP attribution engines.
//!
//! Every engine returns an [`Attribution`]: per-feature values `phi`, the
//! base value (mean model output over the background) and `f(x)`. Exact
//! enumeration and Kernel SHAP treat the model as a black box through
//! [`Model`]; Deep SHAP and Gradient SHAP need the network itself.

mod deep;
mod exact;
mod gradient;
mod kernel;
mod matrix;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mlp::{MlpModel, OutputTarget};
use crate::rng::derive_seed;

pub use deep::{deep_shap, DeepExplainer};
pub use exact::{exact_shapley, EXACT_MAX_FEATURES};
pub use gradient::gradient_shap;
pub use kernel::{kernel_shap, kernel_weight, KERNEL_ENUMERATION_MAX_FEATURES};
pub use matrix::ShapMatrix;

/// Scalar function of a feature row.
pub trait Model: Sync {
    fn n_features(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
}

/// Wraps a closure as a [`Model`].
pub struct FnModel<F> {
    d: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(d: usize, f: F) -> Self {
        Self { d, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for FnModel<F> {
    fn n_features(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// An [`MlpModel`] viewed through one output target.
pub struct MlpOutput<'a> {
    pub model: &'a MlpModel,
    pub target: OutputTarget,
}

impl Model for MlpOutput<'_> {
    fn n_features(&self) -> usize {
        self.model.input_dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.model.eval_unchecked(x, self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Kernel,
    Deep,
    Gradient,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Kernel => "kernel",
            Method::Deep => "deep",
            Method::Gradient => "gradient",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "kernel" => Ok(Method::Kernel),
            "deep" => Ok(Method::Deep),
            "gradient" => Ok(Method::Gradient),
            other => Err(Error::config(format!("unknown explainer method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerConfig {
    pub method: Method,
    /// Kernel coalition samples (when enumeration is too large) or Gradient
    /// SHAP path samples.
    pub n_samples: usize,
    pub seed: u64,
    /// Rescale-rule threshold below which the derivative at `x` is used.
    pub epsilon: f64,
    pub output_target: OutputTarget,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            method: Method::Deep,
            n_samples: 2000,
            seed: 0,
            epsilon: 1e-7,
            output_target: OutputTarget::Probability,
        }
    }
}

impl ExplainerConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.method, Method::Kernel | Method::Gradient) && self.n_samples < 1 {
            return Err(Error::config("n_samples must be ≥ 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be > 0"));
        }
        Ok(())
    }

    /// Stream seed for one explained row, keyed on the row's contents so
    /// duplicated rows and reordered inputs get identical results.
    pub fn row_seed(&self, x: &[f64]) -> u64 {
        x.iter()
            .fold(derive_seed(self.seed, "explain/row", x.len() as u64), |acc, v| {
                derive_seed(acc, "explain/row", v.to_bits())
            })
    }
}

/// Attribution of one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub phi: Vec<f64>,
    pub base: f64,
    pub fx: f64,
}

impl Attribution {
    /// `sum(phi) + base - f(x)`.
    pub fn efficiency_gap(&self) -> f64 {
        self.phi.iter().sum::<f64>() + self.base - self.fx
    }
}

pub(crate) fn check_background(background: &Matrix, d: usize) -> Result<()> {
    if background.rows() == 0 {
        return Err(Error::Empty("background"));
    }
    if background.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: background.cols(),
        });
    }
    Ok(())
}

pub(crate) fn check_row(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("explained row contains non-finite values"));
    }
    Ok(())
}

/// Mean model output over the background.
pub fn expected_value(model: &dyn Model, background: &Matrix) -> f64 {
    background.iter_rows().map(|b| model.eval(b)).sum::<f64>() / background.rows() as f64
}

/// Explains one row with the configured engine.
pub fn explain_row(model: &MlpModel, background: &Matrix, x: &[f64], cfg: &ExplainerConfig) -> Result<Attribution> {
    cfg.validate()?;
    let out = MlpOutput {
        model,
        target: cfg.output_target,
    };
    match cfg.method {
        Method::Exact => exact_shapley(&out, background, x),
        Method::Kernel => kernel_shap(&out, background, x, cfg),
        Method::Deep => deep_shap(model, background, x, cfg),
        Method::Gradient => gradient_shap(model, background, x, cfg),
    }
}

/// Explains every row of `rows`. Rows are processed in parallel; the result
/// does not depend on thread count or scheduling.
pub fn explain_set(
    model: &MlpModel,
    background: &Matrix,
    rows: &Matrix,
    feature_names: &[String],
    cfg: &ExplainerConfig,
) -> Result<ShapMatrix> {
    cfg.validate()?;
    let d = model.input_dim();
    check_background(background, d)?;
    if rows.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rows.cols(),
        });
    }
    if feature_names.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: feature_names.len(),
        });
    }

    let results: Vec<Attribution> = match cfg.method {
        Method::Deep => {
            let engine = DeepExplainer::new(model, background, cfg)?;
            rows.iter_rows()
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|x| engine.explain(x))
                .collect::<Result<_>>()?
        }
        _ => rows
            .iter_rows()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|x| explain_row(model, background, x, cfg))
            .collect::<Result<_>>()?,
    };

    let base = match results.first() {
        Some(a) => a.base,
        None => expected_value(
            &MlpOutput {
                model,
                target: cfg.output_target,
            },
            background,
        ),
    };
    let mut phi = Matrix::zeros(rows.rows(), d);
    let mut fx = Vec::with_capacity(rows.rows());
    for (i, a) in results.into_iter().enumerate() {
        phi.row_mut(i).copy_from_slice(&a.phi);
        fx.push(a.fx);
    }
    Ok(ShapMatrix {
        phi,
        base_value: base,
        fx,
        feature_names: feature_names.to_vec(),
        config: cfg.clone(),
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use rand::Rng;

    use crate::matrix::Matrix;
    use crate::mlp::{Activation, DenseLayer, MlpModel};

    pub fn random_net(d: usize, hidden: &[usize], out: Activation, seed: u64) -> MlpModel {
        let mut rng = crate::rng::rng_from(seed);
        let mut layers = Vec::new();
        let mut prev = d;
        for &h in hidden {
            let w = (0..prev * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = (0..h).map(|_| rng.gen_range(-0.5..0.5)).collect();
            layers.push(DenseLayer::new(prev, h, w, b, Activation::Relu).unwrap());
            prev = h;
        }
        let w = (0..prev).map(|_| rng.gen_range(-1.0..1.0)).collect();
        layers.push(DenseLayer::new(prev, 1, w, vec![0.1], out).unwrap());
        MlpModel::from_layers(layers).unwrap()
    }

    pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = crate::rng::rng_from(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }
}
